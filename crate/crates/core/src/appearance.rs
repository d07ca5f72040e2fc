//! Color histograms, color classes and the appearance cost automaton.
//!
//! Each track's label sequence is read by an automaton with one visible and
//! one occluded state per class. Reading the empty symbol `E = K + 1` moves a
//! track from visible to occluded; reading its class again brings it back.

use std::sync::Arc;

use cptrack_cp::{Automaton, CostMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::types::BBox;

/// Bins per channel of the joint RGB histogram.
pub const BINS_PER_CHANNEL: usize = 8;
/// Total bins of an RGB histogram.
pub const RGB_BINS: usize = BINS_PER_CHANNEL * BINS_PER_CHANNEL * BINS_PER_CHANNEL;

const KMEANS_MAX_ITER: usize = 100;

/// A normalized histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorHistogram {
    bins: Vec<f64>,
}

impl ColorHistogram {
    /// Accepts bins summing to 1 within 1e-6 and renormalizes them exactly.
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        let sum = checked_sum(&bins)?;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!("histogram sums to {sum}, expected 1")));
        }
        Ok(Self::scaled(bins, sum))
    }

    /// Normalize arbitrary nonnegative counts.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let sum = checked_sum(counts)?;
        if sum <= 0.0 {
            return Err(Error::Invalid("histogram has no mass".into()));
        }
        Ok(Self::scaled(counts.to_vec(), sum))
    }

    fn scaled(mut bins: Vec<f64>, sum: f64) -> Self {
        for b in &mut bins {
            *b /= sum;
        }
        ColorHistogram { bins }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

fn checked_sum(bins: &[f64]) -> Result<f64> {
    if bins.is_empty() {
        return Err(Error::Invalid("histogram has no bins".into()));
    }
    if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::Invalid("histogram bins must be finite and nonnegative".into()));
    }
    Ok(bins.iter().sum())
}

/// Bhattacharyya distance `sqrt(1 - BC)` with `BC = sum sqrt(p q)`.
///
/// Evaluated as `sqrt(sum (sqrt p - sqrt q)^2 / 2)`, which is the same value
/// for normalized inputs but exactly 0 when `p == q`.
pub fn bhattacharyya_distance(p: &ColorHistogram, q: &ColorHistogram) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid(format!(
            "histogram sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(distance(p.bins(), q.bins()))
}

fn distance(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    (s / 2.0).sqrt().clamp(0.0, 1.0)
}

/// K color class centers.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorClassModel {
    centers: Vec<ColorHistogram>,
}

impl ColorClassModel {
    pub fn new(centers: Vec<ColorHistogram>) -> Result<Self> {
        let Some(first) = centers.first() else {
            return Err(Error::Invalid("color model needs at least one center".into()));
        };
        if centers.iter().any(|c| c.len() != first.len()) {
            return Err(Error::Invalid("color centers differ in size".into()));
        }
        Ok(ColorClassModel { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[ColorHistogram] {
        &self.centers
    }

    /// Class label in `1..=K`.
    pub fn classify(&self, h: &ColorHistogram) -> Result<u32> {
        assign_color_class(h, self)
    }
}

/// Result of [`kmeans_cluster`].
#[derive(Clone, Debug)]
pub struct Clustering {
    pub model: ColorClassModel,
    /// Class label in `1..=K` of every input histogram.
    pub labels: Vec<u32>,
    /// Sum of member-to-center distances after the initial assignment and after every iteration.
    pub objective: Vec<f64>,
}

/// K-Means under the Bhattacharyya distance.
///
/// Centers start at `k` distinct members drawn with a ChaCha8 generator
/// seeded by `seed` and are recomputed as the renormalized mean of their
/// members. A recomputed center that would raise its cluster's total distance
/// is not taken, so the objective never increases. Stops when assignments no
/// longer change or after 100 iterations.
pub fn kmeans_cluster(hists: &[ColorHistogram], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || k > hists.len() {
        return Err(Error::Invalid(format!(
            "cannot form {k} clusters from {} histograms",
            hists.len()
        )));
    }
    let bins = hists[0].len();
    if hists.iter().any(|h| h.len() != bins) {
        return Err(Error::Invalid("histograms differ in size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, hists.len(), k).into_vec();
    picks.sort_unstable();
    let mut centers: Vec<Vec<f64>> = picks.iter().map(|&i| hists[i].bins.clone()).collect();

    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut total = 0.0;
        let labels = hists
            .iter()
            .map(|h| {
                let (c, d) = nearest(&h.bins, centers);
                total += d;
                c
            })
            .collect();
        (labels, total)
    };

    let (mut labels, obj) = assign(&centers);
    let mut objective = vec![obj];
    for _ in 0..KMEANS_MAX_ITER {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = hists
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(h, _)| h.bins.as_slice())
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; bins];
            for m in &members {
                for (acc, x) in mean.iter_mut().zip(m.iter()) {
                    *acc += x;
                }
            }
            let sum: f64 = mean.iter().sum();
            mean.iter_mut().for_each(|x| *x /= sum);
            let cost = |ctr: &[f64]| members.iter().map(|m| distance(m, ctr)).sum::<f64>();
            if cost(&mean) <= cost(center) {
                *center = mean;
            }
        }
        let (next, obj) = assign(&centers);
        objective.push(obj);
        if next == labels {
            break;
        }
        labels = next;
    }

    let model = ColorClassModel {
        centers: centers.into_iter().map(|bins| ColorHistogram { bins }).collect(),
    };
    Ok(Clustering {
        model,
        labels: labels.into_iter().map(|l| l as u32 + 1).collect(),
        objective,
    })
}

/// Index of the nearest center, lowest index on ties.
fn nearest(h: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = distance(h, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Label in `1..=K` of the nearest center, lowest label on ties.
pub fn assign_color_class(h: &ColorHistogram, model: &ColorClassModel) -> Result<u32> {
    let mut best = (0u32, f64::INFINITY);
    for (i, c) in model.centers.iter().enumerate() {
        let d = bhattacharyya_distance(h, c)?;
        if d < best.1 {
            best = (i as u32 + 1, d);
        }
    }
    Ok(best.0)
}

/// Costs of the appearance automaton.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    /// Multiplier turning a distance in [0, 1] into an integer cost.
    pub scale: f64,
    /// Cross-class transitions costing more than this are removed.
    pub cap: i64,
    /// Cost of the first missing frame after a visible one.
    pub c_occ: i64,
    /// Cost of every further missing frame.
    pub c_stay: i64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            scale: 1000.0,
            cap: 700,
            c_occ: 300,
            c_stay: 30,
        }
    }
}

impl CostParams {
    pub fn from_config(c: &Config) -> Self {
        CostParams {
            scale: c.cost_scale,
            cap: c.cross_class_cap,
            c_occ: c.c_occ,
            c_stay: c.c_stay,
        }
    }
}

/// Automaton over the class symbols `1..=K` and the empty symbol `K + 1`.
///
/// State 0 is the initial state, `k` the visible state of class `k` and
/// `K + k` its occluded state. Every state accepts.
#[derive(Clone, Debug)]
pub struct AppearanceAutomaton {
    k: usize,
    automaton: Arc<Automaton>,
    costs: Arc<CostMatrix>,
}

impl AppearanceAutomaton {
    pub fn k(&self) -> usize {
        self.k
    }

    /// The empty symbol.
    pub fn empty(&self) -> i64 {
        self.k as i64 + 1
    }

    pub fn visible(&self, class: usize) -> usize {
        class
    }

    pub fn occluded(&self, class: usize) -> usize {
        self.k + class
    }

    pub fn automaton(&self) -> &Arc<Automaton> {
        &self.automaton
    }

    pub fn costs(&self) -> &Arc<CostMatrix> {
        &self.costs
    }

    /// Cost of a label sequence, `None` when it is rejected.
    pub fn replay(&self, word: &[i64]) -> Option<i64> {
        self.automaton.replay(word, &self.costs)
    }
}

/// Build the automaton with cross-class costs `round(scale * distance)`
/// between the model's centers.
pub fn build_cost_automaton(model: &ColorClassModel, params: &CostParams) -> Result<AppearanceAutomaton> {
    let k = model.k();
    let mut dist = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in 0..k {
            dist[j][l] = distance(model.centers[j].bins(), model.centers[l].bins());
        }
    }
    from_distances(k, &dist, params)
}

/// Automaton for bare labels with no known centers: distinct classes are at
/// distance 1, so with the default cap they can never share a track.
pub fn build_label_automaton(k: usize, params: &CostParams) -> Result<AppearanceAutomaton> {
    if k == 0 {
        return Err(Error::Invalid("need at least one class".into()));
    }
    let dist: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|l| if j == l { 0.0 } else { 1.0 }).collect())
        .collect();
    from_distances(k, &dist, params)
}

fn from_distances(k: usize, dist: &[Vec<f64>], params: &CostParams) -> Result<AppearanceAutomaton> {
    if !(params.scale > 0.0 && params.scale.is_finite()) {
        return Err(Error::Invalid("cost scale must be positive".into()));
    }
    if params.c_occ < 0 || params.c_stay < 0 {
        return Err(Error::Invalid("occlusion costs must be nonnegative".into()));
    }
    let states = 2 * k + 1;
    let e = k as i64 + 1;
    let mut trans = Vec::new();
    let mut cost = vec![vec![0i64; k + 1]; states];
    let scaled = |j: usize, l: usize| (params.scale * dist[j - 1][l - 1]).round() as i64;

    for c in 1..=k {
        trans.push((0, c as i64, c));
    }
    trans.push((0, e, 0));
    for j in 1..=k {
        let (vis, occ) = (j, k + j);
        // both states of class j may move to any visible class within the cap
        for l in 1..=k {
            let c = if l == j { 0 } else { scaled(j, l) };
            if l == j || c <= params.cap {
                trans.push((vis, l as i64, l));
                trans.push((occ, l as i64, l));
                cost[vis][l - 1] = c;
                cost[occ][l - 1] = c;
            }
        }
        trans.push((vis, e, occ));
        cost[vis][k] = params.c_occ;
        trans.push((occ, e, occ));
        cost[occ][k] = params.c_stay;
    }
    let accepting: Vec<usize> = (0..states).collect();
    let automaton = Automaton::new(states, k + 1, 0, &accepting, &trans)?;
    let costs = CostMatrix::from_fn(k + 1, states, |sym, state| cost[state][sym as usize - 1])?;
    Ok(AppearanceAutomaton {
        k,
        automaton: Arc::new(automaton),
        costs: Arc::new(costs),
    })
}

/// An RGB image with 8 or 16 bits per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    maxval: u16,
    data: Vec<u16>,
}

impl RgbImage {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|&c| c as u16));
            }
        }
        RgbImage {
            width,
            height,
            maxval: 255,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u16; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Parse a binary (P6) PPM.
    pub fn parse_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("malformed PPM: {m}"));
        let mut pos = 0;
        let mut header = Vec::new();
        while header.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
        }
        if header[0] != "P6" {
            return Err(bad("expected magic P6"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(header[1])?, parse(header[2])?, parse(header[3])?);
        if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
            return Err(bad("bad dimensions or maxval"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let n = width * height * 3;
        let need = if wide { 2 * n } else { n };
        let raster = bytes.get(pos..pos + need).ok_or_else(|| bad("truncated raster"))?;
        let data = if wide {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        };
        Ok(RgbImage {
            width,
            height,
            maxval: maxval as u16,
            data,
        })
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            out.extend(self.data.iter().flat_map(|v| v.to_be_bytes()));
        } else {
            out.extend(self.data.iter().map(|&v| v as u8));
        }
        out
    }
}

/// Joint RGB histogram (8 bins per channel) of the pixels inside `bbox`
/// after clipping it to the image.
pub fn extract_histogram(img: &RgbImage, bbox: &BBox) -> Result<ColorHistogram> {
    let clip = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        let a = lo.floor().max(0.0).min(n as f64) as usize;
        let b = hi.ceil().max(0.0).min(n as f64) as usize;
        (a, b)
    };
    let (x0, x1) = clip(bbox.left, bbox.right(), img.width);
    let (y0, y1) = clip(bbox.top, bbox.bottom(), img.height);
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::Invalid("box does not intersect the image".into()));
    }
    let levels = img.maxval as usize + 1;
    let mut counts = vec![0.0; RGB_BINS];
    for y in y0..y1 {
        for x in x0..x1 {
            let [r, g, b] = img.pixel(x, y).map(|c| c as usize * BINS_PER_CHANNEL / levels);
            counts[(r * BINS_PER_CHANNEL + g) * BINS_PER_CHANNEL + b] += 1.0;
        }
    }
    ColorHistogram::from_counts(&counts)
}
