//! Synthetic scenes with ground truth, the IoU baseline tracker and benchmark suites.
//!
//! Randomness comes from ChaCha8 seeded by the scene seed, with one stream per
//! scene element: stream 0 for false positives and stream `o + 1` for object
//! `o`. Adding an object therefore leaves the other objects' draws unchanged.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::appearance::{ColorClassModel, ColorHistogram, RGB_BINS};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, CSV_HEADER};
use crate::pipeline::{track_video, Appearance, HistogramMap};
use crate::types::{BBox, Detection, Frames, Provenance, TrackSet};

/// Per-bin noise bound applied to class-center histograms.
pub const HIST_NOISE: f64 = 0.05;
const RANDOM_SPEC_STREAM: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub entry: u32,
    pub exit: u32,
    /// Top-left corner at the entry frame.
    pub left: f64,
    pub top: f64,
    pub vx: f64,
    pub vy: f64,
    pub width: f64,
    pub height: f64,
    pub class: u32,
}

impl ObjectSpec {
    pub fn bbox_at(&self, frame: u32) -> BBox {
        let dt = (frame - self.entry) as f64;
        BBox::new(self.left + self.vx * dt, self.top + self.vy * dt, self.width, self.height)
    }
}

/// Frames `start..=end` in which an object is hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Occlusion {
    /// 0-based object index.
    pub object: usize,
    pub start: u32,
    pub end: u32,
}

/// A synthetic scene.
///
/// Text form: `key=value` lines for `seed`, `frames`, `image` (`WxH`),
/// `classes`, `miss_prob`, `fp_rate`, `jitter`, then one
/// `object=entry,exit,left,top,vx,vy,width,height,class` line per object and
/// `occlusion=object,start,end` lines with 1-based object numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: u32,
    pub width: f64,
    pub height: f64,
    pub classes: u32,
    /// Probability that a visible object's box is missing from the detections.
    pub miss_prob: f64,
    /// Mean false positives per frame.
    pub fp_rate: f64,
    /// Standard deviation of detection center noise, in pixels.
    pub jitter: f64,
    pub objects: Vec<ObjectSpec>,
    pub occlusions: Vec<Occlusion>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            frames: 60,
            width: 1280.0,
            height: 720.0,
            classes: 4,
            miss_prob: 0.0,
            fp_rate: 0.0,
            jitter: 0.0,
            objects: Vec::new(),
            occlusions: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(m));
        if self.frames == 0 || !(self.width > 0.0 && self.height > 0.0) {
            return fail("scene needs frames and a positive image size".into());
        }
        if self.classes == 0 || self.classes as usize > RGB_BINS {
            return fail(format!("classes must lie in 1..={RGB_BINS}"));
        }
        if !(0.0..=1.0).contains(&self.miss_prob) || self.fp_rate < 0.0 || self.jitter < 0.0 {
            return fail("noise parameters out of range".into());
        }
        for (o, ob) in self.objects.iter().enumerate() {
            let n = o + 1;
            if ob.entry < 1 || ob.entry > ob.exit || ob.exit > self.frames {
                return fail(format!("object {n}: lifespan outside 1..={}", self.frames));
            }
            if ob.width <= 0.0 || ob.height <= 0.0 {
                return fail(format!("object {n}: nonpositive size"));
            }
            if ob.class < 1 || ob.class > self.classes {
                return fail(format!("object {n}: class outside 1..={}", self.classes));
            }
            for f in [ob.entry, ob.exit] {
                let b = ob.bbox_at(f);
                if b.left < 0.0 || b.top < 0.0 || b.right() > self.width || b.bottom() > self.height {
                    return fail(format!("object {n} leaves the image at frame {f}"));
                }
            }
        }
        for w in &self.occlusions {
            let Some(ob) = self.objects.get(w.object) else {
                return fail(format!("occlusion refers to unknown object {}", w.object + 1));
            };
            if w.start > w.end || w.start < ob.entry || w.end > ob.exit {
                return fail(format!("occlusion of object {} lies outside its lifespan", w.object + 1));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = SceneSpec {
            objects: Vec::new(),
            occlusions: Vec::new(),
            ..SceneSpec::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse("scene", n + 1, m);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| err(format!("{key}: bad number {v:?}")));
            let int = |v: &str| v.trim().parse::<u64>().map_err(|_| err(format!("{key}: bad integer {v:?}")));
            match key {
                "seed" => s.seed = int(value)?,
                "frames" => s.frames = int(value)? as u32,
                "image" => {
                    let (w, h) = value.split_once('x').ok_or_else(|| err("image: expected WxH".into()))?;
                    s.width = num(w)?;
                    s.height = num(h)?;
                }
                "classes" => s.classes = int(value)? as u32,
                "miss_prob" => s.miss_prob = num(value)?,
                "fp_rate" => s.fp_rate = num(value)?,
                "jitter" => s.jitter = num(value)?,
                "object" => {
                    let f: Vec<&str> = value.split(',').collect();
                    if f.len() != 9 {
                        return Err(err("object: expected 9 fields".into()));
                    }
                    s.objects.push(ObjectSpec {
                        entry: int(f[0])? as u32,
                        exit: int(f[1])? as u32,
                        left: num(f[2])?,
                        top: num(f[3])?,
                        vx: num(f[4])?,
                        vy: num(f[5])?,
                        width: num(f[6])?,
                        height: num(f[7])?,
                        class: int(f[8])? as u32,
                    });
                }
                "occlusion" => {
                    let f: Vec<&str> = value.split(',').collect();
                    if f.len() != 3 {
                        return Err(err("occlusion: expected 3 fields".into()));
                    }
                    let object = int(f[0])? as usize;
                    if object == 0 {
                        return Err(err("occlusion: objects are numbered from 1".into()));
                    }
                    s.occlusions.push(Occlusion {
                        object: object - 1,
                        start: int(f[1])? as u32,
                        end: int(f[2])? as u32,
                    });
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        writeln!(t, "seed={}", self.seed).unwrap();
        writeln!(t, "frames={}", self.frames).unwrap();
        writeln!(t, "image={}x{}", self.width, self.height).unwrap();
        writeln!(t, "classes={}", self.classes).unwrap();
        writeln!(t, "miss_prob={}", self.miss_prob).unwrap();
        writeln!(t, "fp_rate={}", self.fp_rate).unwrap();
        writeln!(t, "jitter={}", self.jitter).unwrap();
        for o in &self.objects {
            writeln!(
                t,
                "object={},{},{},{},{},{},{},{},{}",
                o.entry, o.exit, o.left, o.top, o.vx, o.vy, o.width, o.height, o.class
            )
            .unwrap();
        }
        for w in &self.occlusions {
            writeln!(t, "occlusion={},{},{}", w.object + 1, w.start, w.end).unwrap();
        }
        t
    }
}

/// Kinds of randomly drawn scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    /// No noise and no occlusion.
    Clean,
    /// One short occlusion per object and slight jitter.
    Occlusion,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(SceneKind::Clean),
            "occlusion" => Ok(SceneKind::Occlusion),
            _ => Err(Error::Invalid(format!("unknown scene kind {s:?}"))),
        }
    }
}

/// Draw a scene whose objects stay at least 100 px apart along one axis
/// whenever they coexist, so no two can be confused spatially.
pub fn random_spec(kind: SceneKind, seed: u64, frames: u32, objects: usize) -> Result<SceneSpec> {
    const SEPARATION: f64 = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RANDOM_SPEC_STREAM);
    let mut spec = SceneSpec {
        seed,
        frames,
        ..SceneSpec::default()
    };
    if kind == SceneKind::Occlusion {
        spec.jitter = 0.5;
    }
    let long = frames.max(8);
    for o in 0..objects {
        let mut placed = false;
        for _ in 0..10_000 {
            let entry = if rng.random_bool(0.5) { 1 } else { rng.random_range(1..=(long / 4).max(1)) };
            let exit = if rng.random_bool(0.5) {
                frames
            } else {
                rng.random_range((3 * long / 4).min(frames)..=frames)
            };
            if exit < entry + 7 {
                continue;
            }
            let width = rng.random_range(30.0..60.0f64).round();
            let height = rng.random_range(30.0..60.0f64).round();
            let vx = (rng.random_range(-4.0..4.0f64) * 4.0).round() / 4.0;
            let vy = (rng.random_range(-3.0..3.0f64) * 4.0).round() / 4.0;
            let span = (exit - entry) as f64;
            let lo_x = (-vx * span).max(0.0);
            let hi_x = spec.width - width - (vx * span).max(0.0);
            let lo_y = (-vy * span).max(0.0);
            let hi_y = spec.height - height - (vy * span).max(0.0);
            if lo_x >= hi_x || lo_y >= hi_y {
                continue;
            }
            let cand = ObjectSpec {
                entry,
                exit,
                left: rng.random_range(lo_x..hi_x).round(),
                top: rng.random_range(lo_y..hi_y).round(),
                vx,
                vy,
                width,
                height,
                class: rng.random_range(1..=spec.classes),
            };
            let clear = spec.objects.iter().all(|other| {
                let lo = cand.entry.max(other.entry);
                let hi = cand.exit.min(other.exit);
                (lo..=hi).all(|f| {
                    let (ax, ay) = cand.bbox_at(f).center();
                    let (bx, by) = other.bbox_at(f).center();
                    (ax - bx).abs().max((ay - by).abs()) > SEPARATION
                })
            });
            if clear {
                spec.objects.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Invalid(format!("could not place object {} apart from the others", o + 1)));
        }
    }
    if kind == SceneKind::Occlusion {
        for (o, ob) in spec.objects.iter().enumerate() {
            let len = rng.random_range(1..=2u32);
            let start = rng.random_range(ob.entry + 3..=ob.exit - 3 - len);
            spec.occlusions.push(Occlusion {
                object: o,
                start,
                end: start + len - 1,
            });
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Ground truth, detections and per-detection histograms of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gt: TrackSet,
    pub detections: Frames,
    /// Keyed by frame and 1-based index into that frame's detections.
    pub histograms: HistogramMap,
    /// The class centers histograms were drawn around.
    pub centers: ColorClassModel,
}

/// Class `c` puts uniform mass on its own block of bins; blocks are disjoint.
pub fn class_centers(classes: u32) -> ColorClassModel {
    let block = (RGB_BINS / classes as usize).clamp(1, 8);
    let centers = (0..classes as usize)
        .map(|c| {
            let mut bins = vec![0.0; RGB_BINS];
            for b in &mut bins[c * block..(c + 1) * block] {
                *b = 1.0;
            }
            ColorHistogram::from_counts(&bins).unwrap()
        })
        .collect();
    ColorClassModel::new(centers).unwrap()
}

fn noisy(center: &ColorHistogram, rng: &mut ChaCha8Rng) -> ColorHistogram {
    let bins: Vec<f64> = center
        .bins()
        .iter()
        .map(|&b| {
            if b > 0.0 {
                (b + rng.random_range(-HIST_NOISE..=HIST_NOISE)).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    ColorHistogram::from_counts(&bins).unwrap_or_else(|_| center.clone())
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let centers = class_centers(spec.classes);
    let jitter = if spec.jitter > 0.0 {
        Some(Normal::new(0.0, spec.jitter).map_err(|e| Error::Invalid(e.to_string()))?)
    } else {
        None
    };
    let mut gt = TrackSet::new();
    let mut raw: Vec<(Detection, ColorHistogram)> = Vec::new();

    for (o, ob) in spec.objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(o as u64 + 1);
        let center = &centers.centers()[ob.class as usize - 1];
        for f in ob.entry..=ob.exit {
            let b = ob.bbox_at(f);
            gt.push(o as u64 + 1, f, b, Provenance::Detector);
            let missed = rng.random::<f64>() < spec.miss_prob;
            let (dx, dy) = match &jitter {
                Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                None => (0.0, 0.0),
            };
            let hist = noisy(center, &mut rng);
            let hidden = spec
                .occlusions
                .iter()
                .any(|w| w.object == o && (w.start..=w.end).contains(&f));
            if missed || hidden {
                continue;
            }
            let bbox = BBox::new(b.left + dx, b.top + dy, b.width, b.height);
            raw.push((Detection::new(f, bbox, 1.0), hist));
        }
    }

    if spec.fp_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(0);
        let count = Poisson::new(spec.fp_rate).map_err(|e| Error::Invalid(e.to_string()))?;
        for f in 1..=spec.frames {
            let n = count.sample(&mut rng) as usize;
            for _ in 0..n {
                let w = rng.random_range(20.0..60.0f64).min(spec.width);
                let h = rng.random_range(20.0..60.0f64).min(spec.height);
                let left = rng.random_range(0.0..=spec.width - w);
                let top = rng.random_range(0.0..=spec.height - h);
                let class = rng.random_range(1..=spec.classes);
                let conf = rng.random_range(0.3..1.0);
                let hist = noisy(&centers.centers()[class as usize - 1], &mut rng);
                raw.push((Detection::new(f, BBox::new(left, top, w, h), conf), hist));
            }
        }
    }

    raw.sort_by(|a, b| {
        a.0.frame
            .cmp(&b.0.frame)
            .then(a.0.bbox.left.total_cmp(&b.0.bbox.left))
            .then(a.0.bbox.top.total_cmp(&b.0.bbox.top))
    });
    let mut detections = Frames::new();
    let mut histograms = HistogramMap::new();
    for (d, h) in raw {
        let frame = detections.entry(d.frame).or_default();
        frame.push(d.clone());
        histograms.insert((d.frame, frame.len()), h);
    }
    Ok(Scene {
        gt,
        detections,
        histograms,
        centers,
    })
}

/// Greedy IoU tracker: every frame, tracks extend to the free detection that
/// overlaps their last box most (at least `iou_min`), in decreasing order of
/// overlap. Unmatched detections open tracks and unmatched tracks end.
pub fn iou_baseline_track(frames: &Frames, iou_min: f64) -> TrackSet {
    let mut out = TrackSet::new();
    let (Some(&first), Some(&last)) = (frames.keys().next(), frames.keys().next_back()) else {
        return out;
    };
    let mut active: Vec<(u64, BBox)> = Vec::new();
    let mut next_id = 0u64;
    let none = Vec::new();
    for f in first..=last {
        let dets = frames.get(&f).unwrap_or(&none);
        let mut pairs = Vec::new();
        for (ti, (_, tb)) in active.iter().enumerate() {
            for (di, d) in dets.iter().enumerate() {
                let v = tb.iou(&d.bbox);
                if v >= iou_min {
                    pairs.push((v, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_hit = vec![None; active.len()];
        let mut det_taken = vec![false; dets.len()];
        for (_, ti, di) in pairs {
            if track_hit[ti].is_none() && !det_taken[di] {
                track_hit[ti] = Some(di);
                det_taken[di] = true;
            }
        }
        let mut next = Vec::new();
        for ((id, _), hit) in active.iter().zip(&track_hit) {
            if let Some(di) = *hit {
                out.push(*id, f, dets[di].bbox, dets[di].provenance);
                next.push((*id, dets[di].bbox));
            }
        }
        for (d, taken) in dets.iter().zip(&det_taken) {
            if !taken {
                next_id += 1;
                out.push(next_id, f, d.bbox, d.provenance);
                next.push((next_id, d.bbox));
            }
        }
        active = next;
    }
    out
}

/// A tracker under test.
#[derive(Clone, Debug)]
pub enum Method {
    Cp(Config),
    IouBaseline { iou_min: f64 },
}

/// Track one scene with `method` and score it at IoU 0.5.
pub fn run_method(scene: &Scene, method: &Method) -> Result<MetricsReport> {
    let hyp = match method {
        Method::Cp(cfg) => {
            let appearance = Appearance::Histograms {
                hists: &scene.histograms,
                model: Some(&scene.centers),
            };
            track_video(&scene.detections, appearance, cfg)?.tracks
        }
        Method::IouBaseline { iou_min } => iou_baseline_track(&scene.detections, *iou_min),
    };
    MetricsReport::evaluate(&scene.gt, &hyp, 0.5)
}

/// Benchmark suite description.
///
/// Text form: `kind`, `seeds` (count), `first_seed`, `frames`, `objects` and
/// `baseline_iou` as `key=value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub kind: SceneKind,
    pub seeds: Vec<u64>,
    pub frames: u32,
    pub objects: usize,
    pub baseline_iou: f64,
}

impl Default for Suite {
    fn default() -> Self {
        Suite {
            kind: SceneKind::Occlusion,
            seeds: (1..=20).collect(),
            frames: 60,
            objects: 4,
            baseline_iou: 0.5,
        }
    }
}

impl Suite {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Suite::default();
        let (mut count, mut first) = (s.seeds.len() as u64, 1u64);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse("suite", n + 1, m);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || err(format!("{k}: cannot parse {v:?}"));
            match k {
                "kind" => s.kind = v.parse().map_err(|_| bad())?,
                "seeds" => count = v.parse().map_err(|_| bad())?,
                "first_seed" => first = v.parse().map_err(|_| bad())?,
                "frames" => s.frames = v.parse().map_err(|_| bad())?,
                "objects" => s.objects = v.parse().map_err(|_| bad())?,
                "baseline_iou" => s.baseline_iou = v.parse().map_err(|_| bad())?,
                _ => return Err(err(format!("unknown key {k:?}"))),
            }
        }
        if count == 0 {
            return Err(Error::Invalid("suite needs at least one seed".into()));
        }
        s.seeds = (first..first + count).collect();
        Ok(s)
    }

    pub fn specs(&self) -> Result<Vec<SceneSpec>> {
        self.seeds
            .iter()
            .map(|&seed| random_spec(self.kind, seed, self.frames, self.objects))
            .collect()
    }
}

/// One method on one seed.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub method: String,
    pub report: std::result::Result<MetricsReport, String>,
}

/// Run every method on every scene, in parallel across runs.
pub fn run_suite(specs: &[SceneSpec], methods: &[(String, Method)]) -> Vec<RunResult> {
    let jobs: Vec<(&SceneSpec, &(String, Method))> =
        specs.iter().flat_map(|s| methods.iter().map(move |m| (s, m))).collect();
    jobs.into_par_iter()
        .map(|(spec, (name, method))| RunResult {
            seed: spec.seed,
            method: name.clone(),
            report: generate_scene(spec)
                .and_then(|scene| run_method(&scene, method))
                .map_err(|e| e.to_string()),
        })
        .collect()
}

/// Per-seed results and pooled metrics per method.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<(String, MetricsReport)>,
}

impl BenchReport {
    pub fn from_runs(runs: Vec<RunResult>, methods: &[String]) -> Self {
        let aggregate = methods
            .iter()
            .map(|m| {
                let ok = runs.iter().filter(|r| &r.method == m).filter_map(|r| r.report.as_ref().ok());
                (m.clone(), MetricsReport::aggregate(ok))
            })
            .collect();
        BenchReport { runs, aggregate }
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.report.is_err())
    }

    /// One aligned row per method.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7}\n",
            "method", "MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDS", "Frag", "N"
        );
        for (m, r) in &self.aggregate {
            writeln!(
                s,
                "{:<8} {:>8.4} {:>8.4} {:>6.3} {:>6.3} {:>6} {:>6} {:>6} {:>6} {:>7}",
                m, r.mota, r.idf1, r.mt, r.ml, r.fp, r.fn_, r.ids, r.frag, r.n
            )
            .unwrap();
        }
        for f in self.failures() {
            writeln!(s, "failed: {} seed {}: {}", f.method, f.seed, f.report.as_ref().unwrap_err()).unwrap();
        }
        s
    }

    /// Per-seed CSV.
    pub fn csv(&self) -> String {
        let mut s = format!("seed,method,{CSV_HEADER},error\n");
        for r in &self.runs {
            match &r.report {
                Ok(m) => writeln!(s, "{},{},{},", r.seed, r.method, m.csv_row()).unwrap(),
                Err(e) => writeln!(s, "{},{},,,,,,,,,,{}", r.seed, r.method, e.replace(',', ";")).unwrap(),
            }
        }
        s
    }
}

/// CP pipeline against the IoU baseline on every seed of `suite`.
pub fn run_benchmark(suite: &Suite, cfg: &Config) -> Result<BenchReport> {
    let specs = suite.specs()?;
    let methods = vec![
        ("cp".to_string(), Method::Cp(cfg.clone())),
        (
            "iou".to_string(),
            Method::IouBaseline {
                iou_min: suite.baseline_iou,
            },
        ),
    ];
    let runs = run_suite(&specs, &methods);
    let names: Vec<String> = methods.into_iter().map(|(n, _)| n).collect();
    Ok(BenchReport::from_runs(runs, &names))
}
