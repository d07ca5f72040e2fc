//! CLEAR-MOT, IDF1 and mostly-tracked / mostly-lost ratios.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{BBox, TrackSet};

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// `1 - (fp + fn + ids) / n`. With no ground truth this is 1 when there are
/// no errors and negative infinity otherwise.
pub fn mota(fp: usize, fn_: usize, ids: usize, n: usize) -> f64 {
    let errors = (fp + fn_ + ids) as f64;
    if n == 0 {
        return if errors == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - errors / n as f64
}

/// CLEAR-MOT counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClearMot {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub frag: usize,
    /// Ground-truth boxes.
    pub n: usize,
    /// Matched frames and lifespan of every ground-truth track.
    pub coverage: Vec<(u64, usize, usize)>,
}

/// Match hypotheses to ground truth frame by frame.
///
/// Pairs matched in an earlier frame are kept while their IoU stays at or
/// above `iou_thresh`; the rest are matched greedily by decreasing IoU (ties
/// to the lower ground-truth id, then the lower hypothesis id). A ground-truth
/// track whose hypothesis differs from its previous match is an identity
/// switch; one that goes from matched to unmatched is a fragmentation.
///
/// Fails when both sets are non-empty and their frame ranges do not overlap.
pub fn clear_mot(gt: &TrackSet, hyp: &TrackSet, iou_thresh: f64) -> Result<ClearMot> {
    if let (Some(g), Some(h)) = (gt.frame_range(), hyp.frame_range()) {
        if g.1 < h.0 || h.1 < g.0 {
            return Err(Error::Invalid(format!(
                "ground truth covers frames {}..={} but hypotheses cover {}..={}",
                g.0, g.1, h.0, h.1
            )));
        }
    }
    let gt_frames = gt.by_frame();
    let hyp_frames = hyp.by_frame();
    let frames: BTreeSet<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    let empty = Vec::new();

    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut was_matched: HashMap<u64, bool> = HashMap::new();
    let mut matched_frames: HashMap<u64, usize> = HashMap::new();
    let mut r = ClearMot::default();

    for f in frames {
        let gts = gt_frames.get(&f).unwrap_or(&empty);
        let hyps = hyp_frames.get(&f).unwrap_or(&empty);
        r.n += gts.len();
        let mut gt_hit: Vec<Option<usize>> = vec![None; gts.len()];
        let mut hyp_taken = vec![false; hyps.len()];

        for (gi, (g, gbox)) in gts.iter().enumerate() {
            let Some(&h) = last_match.get(g) else { continue };
            if let Some(hi) = hyps.iter().position(|(id, _)| *id == h) {
                if !hyp_taken[hi] && gbox.iou(&hyps[hi].1) >= iou_thresh {
                    gt_hit[gi] = Some(hi);
                    hyp_taken[hi] = true;
                }
            }
        }
        let mut pairs = Vec::new();
        for (gi, (_, gbox)) in gts.iter().enumerate() {
            if gt_hit[gi].is_some() {
                continue;
            }
            for (hi, (_, hbox)) in hyps.iter().enumerate() {
                if hyp_taken[hi] {
                    continue;
                }
                let v = gbox.iou(hbox);
                if v >= iou_thresh {
                    pairs.push((v, gi, hi));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, gi, hi) in pairs {
            if gt_hit[gi].is_none() && !hyp_taken[hi] {
                gt_hit[gi] = Some(hi);
                hyp_taken[hi] = true;
            }
        }

        for (gi, (g, _)) in gts.iter().enumerate() {
            let prev = was_matched.insert(*g, gt_hit[gi].is_some()).unwrap_or(false);
            match gt_hit[gi] {
                Some(hi) => {
                    let h = hyps[hi].0;
                    if last_match.insert(*g, h).is_some_and(|old| old != h) {
                        r.ids += 1;
                    }
                    *matched_frames.entry(*g).or_default() += 1;
                }
                None => {
                    r.fn_ += 1;
                    if prev {
                        r.frag += 1;
                    }
                }
            }
        }
        r.fp += hyp_taken.iter().filter(|t| !**t).count();
    }
    r.mota = mota(r.fp, r.fn_, r.ids, r.n);
    r.coverage = gt
        .iter()
        .map(|(id, pts)| (id, matched_frames.get(&id).copied().unwrap_or(0), pts.len()))
        .collect();
    Ok(r)
}

/// Identity-level precision/recall summary.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Idf1 {
    pub idf1: f64,
    pub idtp: usize,
    pub gt_boxes: usize,
    pub hyp_boxes: usize,
}

/// IDF1 from a globally optimal one-to-one pairing of trajectories.
///
/// Every ground-truth and hypothesis trajectory is either paired, costing the
/// boxes of either side left unmatched, or left alone, costing all its boxes.
pub fn idf1(gt: &TrackSet, hyp: &TrackSet, iou_thresh: f64) -> Idf1 {
    let gts: Vec<_> = gt.iter().collect();
    let hyps: Vec<_> = hyp.iter().collect();
    let gt_boxes = gt.num_boxes();
    let hyp_boxes = hyp.num_boxes();
    let (ng, nh) = (gts.len(), hyps.len());
    if ng == 0 || nh == 0 {
        return Idf1 {
            idf1: if gt_boxes + hyp_boxes == 0 { 1.0 } else { 0.0 },
            idtp: 0,
            gt_boxes,
            hyp_boxes,
        };
    }
    let mut overlap = vec![vec![0usize; nh]; ng];
    for (gi, (_, gp)) in gts.iter().enumerate() {
        for (hi, (_, hp)) in hyps.iter().enumerate() {
            let (mut a, mut b, mut n) = (0, 0, 0);
            while a < gp.len() && b < hp.len() {
                match gp[a].frame.cmp(&hp[b].frame) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        if gp[a].bbox.iou(&hp[b].bbox) >= iou_thresh {
                            n += 1;
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
            overlap[gi][hi] = n;
        }
    }
    // rows: gt tracks then one dummy per hypothesis; columns: hypotheses then one dummy per gt track
    let size = ng + nh;
    let forbidden = (gt_boxes + hyp_boxes + 1) as f64;
    let mut cost = vec![vec![0.0; size]; size];
    for r in 0..size {
        for c in 0..size {
            cost[r][c] = match (r < ng, c < nh) {
                (true, true) => (gts[r].1.len() + hyps[c].1.len() - 2 * overlap[r][c]) as f64,
                (true, false) if c - nh == r => gts[r].1.len() as f64,
                (false, true) if r - ng == c => hyps[c].1.len() as f64,
                (false, false) => 0.0,
                _ => forbidden,
            };
        }
    }
    let (pairs, _) = hungarian(&cost);
    let idtp: usize = pairs
        .iter()
        .filter(|&&(r, c)| r < ng && c < nh)
        .map(|&(r, c)| overlap[r][c])
        .sum();
    Idf1 {
        idf1: 2.0 * idtp as f64 / (gt_boxes + hyp_boxes) as f64,
        idtp,
        gt_boxes,
        hyp_boxes,
    }
}

/// Minimum-cost assignment on a rectangular matrix.
///
/// Returns `(row, column)` pairs sorted by row, one per row when there are no
/// more rows than columns and one per column otherwise, plus the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (Vec::new(), 0.0);
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let (pairs, total) = hungarian(&t);
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return (pairs, total);
    }
    // shortest augmenting paths with potentials; 1-based with column 0 as the root
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    (pairs, total)
}

/// Fractions of ground-truth tracks matched in at least 80% / under 20% of their frames.
pub fn mt_ml(gt: &TrackSet, hyp: &TrackSet, iou_thresh: f64) -> Result<(f64, f64)> {
    let r = clear_mot(gt, hyp, iou_thresh)?;
    Ok(ratios(&r.coverage))
}

fn ratios(coverage: &[(u64, usize, usize)]) -> (f64, f64) {
    if coverage.is_empty() {
        return (0.0, 0.0);
    }
    let (mt, ml) = counts(coverage);
    let n = coverage.len() as f64;
    (mt as f64 / n, ml as f64 / n)
}

fn counts(coverage: &[(u64, usize, usize)]) -> (usize, usize) {
    let mut mt = 0;
    let mut ml = 0;
    for &(_, hit, len) in coverage {
        let frac = hit as f64 / len as f64;
        if frac >= 0.8 {
            mt += 1;
        }
        if frac < 0.2 {
            ml += 1;
        }
    }
    (mt, ml)
}

/// Every metric for one run. Counts are kept so reports can be summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub frag: usize,
    pub n: usize,
    pub idf1: f64,
    pub idtp: usize,
    pub hyp_boxes: usize,
    pub mt: f64,
    pub ml: f64,
    pub mt_count: usize,
    pub ml_count: usize,
    pub gt_tracks: usize,
}

pub const CSV_HEADER: &str = "mota,idf1,mt,ml,fp,fn,ids,frag,n";

impl MetricsReport {
    pub fn evaluate(gt: &TrackSet, hyp: &TrackSet, iou_thresh: f64) -> Result<Self> {
        let c = clear_mot(gt, hyp, iou_thresh)?;
        let id = idf1(gt, hyp, iou_thresh);
        let (mt_count, ml_count) = counts(&c.coverage);
        let (mt, ml) = ratios(&c.coverage);
        Ok(MetricsReport {
            mota: c.mota,
            fp: c.fp,
            fn_: c.fn_,
            ids: c.ids,
            frag: c.frag,
            n: c.n,
            idf1: id.idf1,
            idtp: id.idtp,
            hyp_boxes: id.hyp_boxes,
            mt,
            ml,
            mt_count,
            ml_count,
            gt_tracks: c.coverage.len(),
        })
    }

    /// Pool several runs: counts are summed and ratios recomputed from them.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        let mut a = MetricsReport::default();
        for r in reports {
            a.fp += r.fp;
            a.fn_ += r.fn_;
            a.ids += r.ids;
            a.frag += r.frag;
            a.n += r.n;
            a.idtp += r.idtp;
            a.hyp_boxes += r.hyp_boxes;
            a.mt_count += r.mt_count;
            a.ml_count += r.ml_count;
            a.gt_tracks += r.gt_tracks;
        }
        a.mota = mota(a.fp, a.fn_, a.ids, a.n);
        let boxes = a.n + a.hyp_boxes;
        a.idf1 = if boxes == 0 { 1.0 } else { 2.0 * a.idtp as f64 / boxes as f64 };
        if a.gt_tracks > 0 {
            a.mt = a.mt_count as f64 / a.gt_tracks as f64;
            a.ml = a.ml_count as f64 / a.gt_tracks as f64;
        }
        a
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            self.mota, self.idf1, self.mt, self.ml, self.fp, self.fn_, self.ids, self.frag, self.n
        )
    }

    /// Aligned two-column table.
    pub fn table(&self) -> String {
        let rows = [
            ("MOTA", format!("{:.4}", self.mota)),
            ("IDF1", format!("{:.4}", self.idf1)),
            ("MT", format!("{:.4}", self.mt)),
            ("ML", format!("{:.4}", self.ml)),
            ("FP", self.fp.to_string()),
            ("FN", self.fn_.to_string()),
            ("IDS", self.ids.to_string()),
            ("Frag", self.frag.to_string()),
            ("N", self.n.to_string()),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            writeln!(s, "{k:<5} {v:>10}").unwrap();
        }
        s
    }
}
