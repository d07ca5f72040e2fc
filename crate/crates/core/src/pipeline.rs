//! Batch windowing, stitching, post-processing and the end-to-end tracker.

use std::collections::{BTreeMap, HashMap};

use crate::appearance::{
    build_cost_automaton, build_label_automaton, kmeans_cluster, AppearanceAutomaton, ColorClassModel,
    ColorHistogram, CostParams,
};
use crate::assoc::{solve_batch, AssociationSolution, BatchDet, BatchInstance, ModelParams};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::presolve::{augment_detections, filter_confidence};
use crate::types::{BBox, Frames, Provenance, TrackPoint, TrackSet};

/// Histograms keyed by frame and 1-based detection index within the frame.
pub type HistogramMap = HashMap<(u32, usize), ColorHistogram>;

/// A window of non-empty frame ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub frames: Vec<u32>,
    /// Leading frames shared with the previous batch; 0 for an independent batch.
    pub overlap: usize,
}

/// Split the ascending non-empty frame ids into windows of `kappa` frames,
/// each repeating the last `beta` frames of the previous one. A run of more
/// than `gap` missing frame ids starts an independent window.
pub fn make_batches(frames: &[u32], kappa: usize, beta: usize, gap: u32) -> Result<Vec<Batch>> {
    if beta >= kappa {
        return Err(Error::Config(format!("beta ({beta}) must be below kappa ({kappa})")));
    }
    let mut out = Vec::new();
    let mut seg_start = 0;
    for end in 1..=frames.len() {
        let split = end == frames.len() || frames[end] - frames[end - 1] - 1 > gap;
        if !split {
            continue;
        }
        let seg = &frames[seg_start..end];
        let mut start = 0;
        loop {
            let stop = (start + kappa).min(seg.len());
            out.push(Batch {
                frames: seg[start..stop].to_vec(),
                overlap: if start == 0 { 0 } else { beta },
            });
            if stop == seg.len() {
                break;
            }
            start = stop - beta;
        }
        seg_start = end;
    }
    Ok(out)
}

/// Carries global track ids across batches.
#[derive(Clone, Debug, Default)]
pub struct Stitcher {
    /// Global id of each (frame, 0-based detection index).
    assigned: HashMap<(u32, usize), u64>,
    next_id: u64,
}

/// How a batch's tracks were linked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StitchStats {
    pub inherited: usize,
    pub fresh: usize,
}

impl Stitcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global_id(&self, frame: u32, det: usize) -> Option<u64> {
        self.assigned.get(&(frame, det)).copied()
    }

    /// Merge a batch solution.
    ///
    /// Each local track takes the global id it shares most overlap-frame
    /// detections with (greedy one-to-one, larger counts first, then lower
    /// local track, then lower global id). Remaining local tracks get fresh
    /// ids. Overlap-frame detections keep their earlier ids.
    pub fn stitch(&mut self, batch: &Batch, sol: &AssociationSolution) -> StitchStats {
        let mut votes: BTreeMap<(u32, u64), usize> = BTreeMap::new();
        for (i, &f) in batch.frames.iter().enumerate().take(batch.overlap) {
            for (j, &k) in sol.tracks[i].iter().enumerate() {
                if let Some(&g) = self.assigned.get(&(f, j)) {
                    *votes.entry((k, g)).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(usize, u32, u64)> = votes.into_iter().map(|((k, g), n)| (n, k, g)).collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut local_to_global: HashMap<u32, u64> = HashMap::new();
        let mut taken = std::collections::HashSet::new();
        for (_, k, g) in ranked {
            if !local_to_global.contains_key(&k) && !taken.contains(&g) {
                local_to_global.insert(k, g);
                taken.insert(g);
            }
        }
        let mut stats = StitchStats {
            inherited: local_to_global.len(),
            fresh: 0,
        };
        for (i, &f) in batch.frames.iter().enumerate().skip(batch.overlap) {
            for (j, &k) in sol.tracks[i].iter().enumerate() {
                let g = *local_to_global.entry(k).or_insert_with(|| {
                    self.next_id += 1;
                    stats.fresh += 1;
                    self.next_id
                });
                self.assigned.insert((f, j), g);
            }
        }
        stats
    }
}

/// Drop tracks with fewer than `beta_d` detector boxes.
pub fn prune_tracks(tracks: &TrackSet, beta_d: usize) -> TrackSet {
    let mut out = tracks.clone();
    out.retain(|_, pts| pts.iter().filter(|p| p.provenance == Provenance::Detector).count() >= beta_d);
    out
}

/// Fill every gap of at most `gamma_d` missing frames inside a track by
/// linear interpolation of center and size.
pub fn fill_gaps(tracks: &TrackSet, gamma_d: u32) -> TrackSet {
    let mut out = tracks.clone();
    for (id, pts) in tracks.iter() {
        for w in pts.windows(2) {
            let (p, q) = (&w[0], &w[1]);
            let missing = q.frame - p.frame - 1;
            if missing == 0 || missing > gamma_d {
                continue;
            }
            let (px, py) = p.bbox.center();
            let (qx, qy) = q.bbox.center();
            let span = (q.frame - p.frame) as f64;
            for f in p.frame + 1..q.frame {
                let s = (f - p.frame) as f64 / span;
                let lerp = |a: f64, b: f64| a + s * (b - a);
                out.insert(
                    id,
                    TrackPoint {
                        frame: f,
                        bbox: BBox::from_center(
                            lerp(px, qx),
                            lerp(py, qy),
                            lerp(p.bbox.width, q.bbox.width),
                            lerp(p.bbox.height, q.bbox.height),
                        ),
                        provenance: Provenance::Interpolated,
                    },
                );
            }
        }
    }
    out
}

/// Nearest-track association used when a batch cannot be solved: each
/// detection extends the nearest track within the motion bound that has the
/// same label and is still free in this frame, or opens a new track.
pub fn greedy_associate(batch: &BatchInstance, params: &ModelParams) -> AssociationSolution {
    let mut last: Vec<BatchDet> = Vec::new();
    let mut tracks = Vec::with_capacity(batch.m());
    for frame in batch.dets() {
        let mut used = vec![false; last.len()];
        let mut ks = Vec::with_capacity(frame.len());
        for det in frame {
            let best = last
                .iter()
                .enumerate()
                .filter(|(k, prev)| {
                    !used[*k]
                        && prev.label == det.label
                        && (prev.cx - det.cx).abs() <= params.lambda_x
                        && (prev.cy - det.cy).abs() <= params.lambda_y
                })
                .min_by(|a, b| {
                    let da = (a.1.cx - det.cx).hypot(a.1.cy - det.cy);
                    let db = (b.1.cx - det.cx).hypot(b.1.cy - det.cy);
                    da.total_cmp(&db).then(a.0.cmp(&b.0))
                })
                .map(|(k, _)| k);
            let k = match best {
                Some(k) => k,
                None => {
                    last.push(*det);
                    used.push(false);
                    last.len() - 1
                }
            };
            last[k] = *det;
            used[k] = true;
            ks.push(k as u32 + 1);
        }
        tracks.push(ks);
    }
    AssociationSolution {
        tau: last.len(),
        tracks,
        track_costs: vec![0; last.len()],
        objective: 0,
        optimal: false,
        satisfy_fallback: false,
    }
}

/// Per-video appearance input.
#[derive(Clone, Copy, Debug, Default)]
pub enum Appearance<'a> {
    /// Use each detection's label, or class 1 where it has none.
    #[default]
    Labels,
    /// Classify histograms with a given model, or with one clustered from
    /// this video's histograms when `model` is `None`.
    Histograms {
        hists: &'a HistogramMap,
        model: Option<&'a ColorClassModel>,
    },
}

/// Tracks plus solver bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct TrackOutput {
    pub tracks: TrackSet,
    pub batches: usize,
    /// Batches whose objective was proved minimal.
    pub optimal: usize,
    /// Batches answered by a satisfy search after minimization found nothing.
    pub satisfy_fallbacks: usize,
    /// Batches the solver could not answer, associated greedily instead.
    pub greedy_fallbacks: usize,
}

/// Label every detection and build the matching automaton.
pub fn label_detections(dets: &Frames, appearance: Appearance, cfg: &Config) -> Result<(Frames, AppearanceAutomaton)> {
    let params = CostParams::from_config(cfg);
    let mut out = dets.clone();
    match appearance {
        Appearance::Labels => {
            let k = dets.values().flatten().filter_map(|d| d.label).max().unwrap_or(1).max(1);
            for d in out.values_mut().flatten() {
                d.label.get_or_insert(1);
            }
            Ok((out, build_label_automaton(k as usize, &params)?))
        }
        Appearance::Histograms { hists, model } => {
            let clustered;
            let model = match model {
                Some(m) => m,
                None => {
                    let mut keys: Vec<&(u32, usize)> = hists.keys().collect();
                    keys.sort_unstable();
                    let all: Vec<ColorHistogram> = keys.iter().map(|k| hists[k].clone()).collect();
                    if all.is_empty() {
                        return label_detections(dets, Appearance::Labels, cfg);
                    }
                    clustered = kmeans_cluster(&all, cfg.k.min(all.len()), cfg.kmeans_seed)?.model;
                    &clustered
                }
            };
            for (&f, frame) in out.iter_mut() {
                for (j, d) in frame.iter_mut().enumerate() {
                    let h = hists.get(&(f, j + 1)).ok_or_else(|| {
                        Error::Invalid(format!("no histogram for detection {} of frame {f}", j + 1))
                    })?;
                    d.label = Some(model.classify(h)?);
                }
            }
            Ok((out, build_cost_automaton(model, &params)?))
        }
    }
}

/// Run the whole tracker on one video.
pub fn track_video(dets: &Frames, appearance: Appearance, cfg: &Config) -> Result<TrackOutput> {
    cfg.validate()?;
    let (labeled, aut) = label_detections(dets, appearance, cfg)?;
    let mut frames: Frames = labeled
        .iter()
        .map(|(&f, ds)| (f, filter_confidence(ds, cfg.min_conf)))
        .filter(|(_, ds)| !ds.is_empty())
        .collect();
    if cfg.presolve {
        frames = augment_detections(&frames, cfg.lifespan, cfg.iou_min);
    }
    let ids: Vec<u32> = frames.keys().copied().collect();
    let batches = make_batches(&ids, cfg.kappa, cfg.beta, cfg.independence_gap)?;

    let mut out = TrackOutput {
        batches: batches.len(),
        ..TrackOutput::default()
    };
    let mut stitcher = Stitcher::new();
    for batch in &batches {
        let dets: Vec<Vec<BatchDet>> = batch
            .frames
            .iter()
            .map(|f| frames[f].iter().map(BatchDet::from_detection).collect())
            .collect();
        let inst = BatchInstance::new(batch.frames.clone(), dets)?;
        let params = ModelParams::for_batch(&inst, cfg);
        let sol = match solve_batch(&inst, &params, &aut) {
            Ok(s) => {
                out.optimal += usize::from(s.optimal);
                out.satisfy_fallbacks += usize::from(s.satisfy_fallback);
                s
            }
            Err(Error::Unsolved { .. }) => {
                out.greedy_fallbacks += 1;
                greedy_associate(&inst, &params)
            }
            Err(e) => return Err(e),
        };
        stitcher.stitch(batch, &sol);
    }

    let mut tracks = TrackSet::new();
    for (&f, ds) in &frames {
        for (j, d) in ds.iter().enumerate() {
            if let Some(g) = stitcher.global_id(f, j) {
                tracks.push(g, f, d.bbox, d.provenance);
            }
        }
    }
    let mut tracks = prune_tracks(&tracks, cfg.beta_d);
    if cfg.fill_gaps {
        tracks = fill_gaps(&tracks, cfg.gamma_d as u32);
    }
    out.tracks = tracks.renumbered();
    Ok(out)
}
