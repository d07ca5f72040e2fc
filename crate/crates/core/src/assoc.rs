//! The per-batch association model.
//!
//! For frame `i` and position `j`, `t[i][j]` is the track of detection `j`.
//! Positions past the frame's real detections are phantom detections, so each
//! `t[i]` is a permutation of the tracks `1..=tau`. `d[i]` is the inverse
//! permutation, `c[i][k]` the color symbol track `k` reads in frame `i` (the
//! empty symbol for a phantom) and `a[k]` the automaton cost of track `k`.
//! The objective is the sum of the `a[k]`.

use std::sync::Arc;
use std::time::Duration;

use cptrack_cp::{solve, Domains, Mode, Model, Outcome, SearchConfig, Solution, VarId};

use crate::appearance::AppearanceAutomaton;
use crate::config::{Config, SolveMode};
use crate::error::{Error, Result};
use crate::types::{Detection, Provenance};

/// Upper bound on the assignments [`brute_force_associate`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// A detection as the model sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchDet {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Color class in `1..=K`.
    pub label: u32,
    pub provenance: Provenance,
}

impl BatchDet {
    pub fn from_detection(d: &Detection) -> Self {
        let (cx, cy) = d.bbox.center();
        BatchDet {
            cx,
            cy,
            width: d.bbox.width,
            height: d.bbox.height,
            label: d.label.unwrap_or(1),
            provenance: d.provenance,
        }
    }
}

/// A window of non-empty frames.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchInstance {
    frames: Vec<u32>,
    dets: Vec<Vec<BatchDet>>,
}

impl BatchInstance {
    pub fn new(frames: Vec<u32>, dets: Vec<Vec<BatchDet>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Invalid("batch has no frames".into()));
        }
        if frames.len() != dets.len() {
            return Err(Error::Invalid("frame ids and detection lists differ in length".into()));
        }
        if dets.iter().any(Vec::is_empty) {
            return Err(Error::Invalid("batch frames must hold at least one detection".into()));
        }
        if dets.iter().flatten().any(|d| d.label == 0) {
            return Err(Error::Invalid("color labels start at 1".into()));
        }
        Ok(BatchInstance { frames, dets })
    }

    pub fn frames(&self) -> &[u32] {
        &self.frames
    }

    pub fn dets(&self) -> &[Vec<BatchDet>] {
        &self.dets
    }

    /// Number of frames.
    pub fn m(&self) -> usize {
        self.frames.len()
    }

    /// Detections in frame `i`.
    pub fn n(&self, i: usize) -> usize {
        self.dets[i].len()
    }

    pub fn max_n(&self) -> usize {
        self.dets.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub tau: usize,
    pub tau_extra: usize,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub mode: SolveMode,
}

impl ModelParams {
    /// Parameters for `batch`, with `tau` from [`choose_tau`].
    pub fn for_batch(batch: &BatchInstance, cfg: &Config) -> Self {
        ModelParams {
            lambda_x: cfg.lambda_x,
            lambda_y: cfg.lambda_y,
            tau: choose_tau(batch, cfg.tau_extra),
            tau_extra: cfg.tau_extra,
            time_limit: cfg.time_limit(),
            node_limit: cfg.batch_node_limit,
            mode: cfg.mode,
        }
    }

    /// Default distances, no limits, minimize.
    pub fn exact(batch: &BatchInstance, tau_extra: usize) -> Self {
        ModelParams {
            lambda_x: 40.0,
            lambda_y: 40.0,
            tau: choose_tau(batch, tau_extra),
            tau_extra,
            time_limit: None,
            node_limit: None,
            mode: SolveMode::Minimize,
        }
    }

    fn near(&self, a: &BatchDet, b: &BatchDet) -> bool {
        (a.cx - b.cx).abs() <= self.lambda_x && (a.cy - b.cy).abs() <= self.lambda_y
    }
}

/// Track count: the largest frame plus at least one spare track.
pub fn choose_tau(batch: &BatchInstance, tau_extra: usize) -> usize {
    batch.max_n() + tau_extra.max(1)
}

/// Number of constraints of each kind in a built model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub inverse: usize,
    pub all_different: usize,
    pub element: usize,
    pub position: usize,
    pub cost_regular: usize,
    pub sum: usize,
}

/// A built model with handles to its variables.
pub struct AssocModel {
    pub model: Model,
    pub tau: usize,
    /// `t[i][j]`: track of position `j` in frame `i`.
    pub t: Vec<Vec<VarId>>,
    /// `d[i][k]`: position held by track `k` in frame `i`.
    pub d: Vec<Vec<VarId>>,
    /// `c[i][k]`: symbol read by track `k` in frame `i`.
    pub c: Vec<Vec<VarId>>,
    /// Automaton cost of each track.
    pub a: Vec<VarId>,
    pub objective: VarId,
    /// The empty symbol read by tracks at phantom positions.
    pub empty: i64,
    pub counts: ConstraintCounts,
}

impl AssocModel {
    /// Real-detection part of a solver solution.
    pub fn extract(&self, batch: &BatchInstance, sol: &Solution) -> AssociationSolution {
        let tracks = (0..batch.m())
            .map(|i| (0..batch.n(i)).map(|j| sol.value(self.t[i][j]) as u32).collect())
            .collect();
        AssociationSolution {
            tau: self.tau,
            tracks,
            track_costs: self.a.iter().map(|&a| sol.value(a)).collect(),
            objective: sol.value(self.objective),
            optimal: sol.optimal,
            satisfy_fallback: false,
        }
    }
}

/// Association of one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociationSolution {
    pub tau: usize,
    /// `tracks[i][j]`: track in `1..=tau` of real detection `j` of frame `i`.
    pub tracks: Vec<Vec<u32>>,
    /// Automaton cost of each track, indexed by track - 1.
    pub track_costs: Vec<i64>,
    pub objective: i64,
    /// The search proved the objective minimal.
    pub optimal: bool,
    /// Minimization found nothing in time and a satisfy search answered instead.
    pub satisfy_fallback: bool,
}

/// Post the association model for `batch`.
pub fn build_model(
    batch: &BatchInstance,
    params: &ModelParams,
    aut: &AppearanceAutomaton,
) -> Result<AssocModel> {
    let tau = params.tau;
    if tau <= batch.max_n() {
        return Err(Error::Invalid(format!(
            "tau = {tau} leaves no spare track for {} detections",
            batch.max_n()
        )));
    }
    let k_max = aut.k() as u32;
    if let Some(bad) = batch.dets.iter().flatten().find(|d| d.label > k_max) {
        return Err(Error::Invalid(format!(
            "label {} outside the {k_max} classes of the automaton",
            bad.label
        )));
    }
    let m = batch.m();
    let e = aut.empty();
    let tau_i = tau as i64;
    let mut model = Model::new();
    let mut counts = ConstraintCounts::default();

    let mut t = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m);
    for i in 0..m {
        let ti: Vec<VarId> = (0..tau).map(|_| model.new_var(1, tau_i)).collect::<std::result::Result<_, _>>()?;
        let di: Vec<VarId> = (0..tau).map(|_| model.new_var(1, tau_i)).collect::<std::result::Result<_, _>>()?;
        let ci: Vec<VarId> = (0..tau).map(|_| model.new_var(1, e)).collect::<std::result::Result<_, _>>()?;
        model.post_inverse(&ti, &di)?;
        model.post_all_different(&ti)?;
        model.post_all_different(&di)?;
        counts.inverse += 1;
        counts.all_different += 2;
        let table: Vec<i64> = (0..tau)
            .map(|j| batch.dets[i].get(j).map_or(e, |det| det.label as i64))
            .collect();
        for k in 0..tau {
            model.post_element(&table, di[k], ci[k])?;
            counts.element += 1;
        }
        t.push(ti);
        d.push(di);
        c.push(ci);
    }

    for i in 0..m.saturating_sub(1) {
        let here = Arc::new(batch.dets[i].clone());
        let next = Arc::new(batch.dets[i + 1].clone());
        for k in 0..tau {
            let (here, next) = (Arc::clone(&here), Arc::clone(&next));
            let p = params.clone();
            model.post_binary_allowed(d[i][k], d[i + 1][k], move |u, v| {
                match (here.get(u as usize - 1), next.get(v as usize - 1)) {
                    (Some(a), Some(b)) => p.near(a, b),
                    _ => true,
                }
            })?;
            counts.position += 1;
        }
    }

    let bound = m as i64 * aut.costs().max_entry();
    let mut a = Vec::with_capacity(tau);
    for k in 0..tau {
        let ak = model.new_var(0, bound)?;
        let word: Vec<VarId> = (0..m).map(|i| c[i][k]).collect();
        model.post_cost_regular(&word, Arc::clone(aut.automaton()), Arc::clone(aut.costs()), ak)?;
        counts.cost_regular += 1;
        a.push(ak);
    }
    let objective = model.new_var(0, bound * tau_i)?;
    model.post_sum(&a, objective)?;
    counts.sum += 1;
    model.minimize(objective)?;

    Ok(AssocModel {
        model,
        tau,
        t,
        d,
        c,
        a,
        objective,
        empty: e,
        counts,
    })
}

#[derive(Clone, Copy)]
enum Role {
    Other,
    T { i: usize, j: usize },
    C { i: usize, k: usize },
}

/// Branch on `t` frame by frame, then on `c`.
///
/// A real detection tries the tracks that already hold a real detection,
/// nearest last position first (ties to the lower track), then the lowest
/// unused track. Tracks that have never held a real detection are
/// interchangeable, so trying one of them is enough. For the same reason a
/// phantom position only tries the smallest track left in its domain.
pub fn branching_plan(batch: &BatchInstance, params: &ModelParams, am: &AssocModel) -> SearchConfig {
    let mut roles = vec![Role::Other; am.model.num_vars()];
    let mut order = Vec::new();
    for (i, ti) in am.t.iter().enumerate() {
        for (j, &v) in ti.iter().enumerate() {
            roles[v.index()] = Role::T { i, j };
            order.push(v);
        }
    }
    for (i, ci) in am.c.iter().enumerate() {
        for (k, &v) in ci.iter().enumerate() {
            roles[v.index()] = Role::C { i, k };
            order.push(v);
        }
    }
    let dets = batch.dets.clone();
    let t = am.t.clone();
    let d = am.d.clone();
    let e = am.empty;
    let tau = am.tau;

    let value_order = move |var: VarId, dom: &Domains| -> Vec<i64> {
        match roles[var.index()] {
            Role::Other => dom.values(var),
            Role::T { i, j } if j >= dets[i].len() => vec![dom.min(var)],
            Role::T { i, j } => {
                let det = &dets[i][j];
                let mut last: Vec<Option<(f64, f64)>> = vec![None; tau + 1];
                for (fi, frame) in dets.iter().enumerate().take(i) {
                    for (fj, prev) in frame.iter().enumerate() {
                        if let Some(k) = dom.value(t[fi][fj]) {
                            last[k as usize] = Some((prev.cx, prev.cy));
                        }
                    }
                }
                let mut used: Vec<(f64, i64)> = Vec::new();
                let mut fresh = None;
                for k in dom.values(var) {
                    match last[k as usize] {
                        Some((x, y)) => used.push((((det.cx - x).powi(2) + (det.cy - y).powi(2)).sqrt(), k)),
                        None if fresh.is_none() => fresh = Some(k),
                        None => {}
                    }
                }
                used.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                used.into_iter().map(|(_, k)| k).chain(fresh).collect()
            }
            Role::C { i, k } => {
                let preferred = match dom.value(d[i][k]) {
                    Some(p) => dets[i].get(p as usize - 1).map_or(e, |det| det.label as i64),
                    None => e,
                };
                let mut vals = dom.values(var);
                vals.sort_by_key(|&v| (v != preferred, v));
                vals
            }
        }
    };

    let mode = match params.mode {
        SolveMode::Minimize => Mode::Minimize,
        SolveMode::Satisfy => Mode::Satisfy,
    };
    let mut cfg = SearchConfig::new(order, mode).with_value_order(value_order);
    cfg.time_limit = params.time_limit;
    cfg.node_limit = params.node_limit;
    cfg
}

/// Solve one batch.
///
/// Minimization returns the best solution found within the limits. If it
/// finds none, a satisfy search is run instead. If that fails as well, the
/// model is rebuilt once with `tau_extra` more tracks.
pub fn solve_batch(
    batch: &BatchInstance,
    params: &ModelParams,
    aut: &AppearanceAutomaton,
) -> Result<AssociationSolution> {
    let mut p = params.clone();
    for _ in 0..2 {
        let am = build_model(batch, &p, aut)?;
        let cfg = branching_plan(batch, &p, &am);
        let (out, _) = solve(&am.model, &cfg)?;
        if let Some(sol) = out.solution() {
            return Ok(am.extract(batch, sol));
        }
        if cfg.mode == Mode::Minimize && matches!(out, Outcome::TimedOut(None)) {
            let sat = SearchConfig {
                mode: Mode::Satisfy,
                ..cfg
            };
            let (out, _) = solve(&am.model, &sat)?;
            if let Some(sol) = out.solution() {
                let mut s = am.extract(batch, sol);
                s.satisfy_fallback = true;
                return Ok(s);
            }
        }
        p.tau += p.tau_extra.max(1);
    }
    Err(Error::Unsolved {
        frame: batch.frames[0],
    })
}

/// Exhaustive minimum over all per-frame injective detection-to-track maps.
///
/// Candidates are enumerated in lexicographic order of the frame-major track
/// tuple and the first minimum is kept.
pub fn brute_force_associate(
    batch: &BatchInstance,
    params: &ModelParams,
    aut: &AppearanceAutomaton,
) -> Result<AssociationSolution> {
    let tau = params.tau;
    if tau <= batch.max_n() {
        return Err(Error::Invalid("tau must exceed the largest frame".into()));
    }
    let mut space = 1.0f64;
    for i in 0..batch.m() {
        for r in 0..batch.n(i) {
            space *= (tau - r) as f64;
        }
    }
    if space > BRUTE_FORCE_LIMIT {
        return Err(Error::Invalid(format!(
            "{space} assignments exceed the enumeration limit"
        )));
    }
    let mut search = Brute {
        batch,
        params,
        aut,
        current: vec![Vec::new(); batch.m()],
        best: None,
    };
    search.frame(0);
    let (objective, tracks, track_costs) = search
        .best
        .ok_or_else(|| Error::Invalid("no feasible association".into()))?;
    Ok(AssociationSolution {
        tau,
        tracks,
        track_costs,
        objective,
        optimal: true,
        satisfy_fallback: false,
    })
}

type Scored = (i64, Vec<Vec<u32>>, Vec<i64>);

struct Brute<'a> {
    batch: &'a BatchInstance,
    params: &'a ModelParams,
    aut: &'a AppearanceAutomaton,
    current: Vec<Vec<u32>>,
    best: Option<Scored>,
}

impl Brute<'_> {
    fn frame(&mut self, i: usize) {
        if i == self.batch.m() {
            self.score();
            return;
        }
        self.current[i].clear();
        self.position(i, 0);
    }

    fn position(&mut self, i: usize, j: usize) {
        if j == self.batch.n(i) {
            self.frame(i + 1);
            return;
        }
        for k in 1..=self.params.tau as u32 {
            if self.current[i].contains(&k) {
                continue;
            }
            if i > 0 {
                let prev = self.current[i - 1].iter().position(|&x| x == k);
                if let Some(pj) = prev {
                    let a = &self.batch.dets[i - 1][pj];
                    if !self.params.near(a, &self.batch.dets[i][j]) {
                        continue;
                    }
                }
            }
            self.current[i].push(k);
            self.position(i, j + 1);
            self.current[i].pop();
        }
    }

    fn score(&mut self) {
        let Some(costs) = track_costs(self.batch, self.params.tau, self.aut, &self.current) else {
            return;
        };
        let total: i64 = costs.iter().sum();
        if self.best.as_ref().is_none_or(|b| total < b.0) {
            self.best = Some((total, self.current.clone(), costs));
        }
    }
}

/// Per-track replay cost, `None` if some track's word is rejected.
fn track_costs(
    batch: &BatchInstance,
    tau: usize,
    aut: &AppearanceAutomaton,
    tracks: &[Vec<u32>],
) -> Option<Vec<i64>> {
    (1..=tau as u32)
        .map(|k| {
            let word: Vec<i64> = (0..batch.m())
                .map(|i| match tracks[i].iter().position(|&x| x == k) {
                    Some(j) => batch.dets[i][j].label as i64,
                    None => aut.empty(),
                })
                .collect();
            aut.replay(&word)
        })
        .collect()
}

/// Violations of a solution found by direct evaluation: distinct in-range
/// tracks per frame, the motion bound, automaton acceptance and cost
/// bookkeeping. Empty when the solution is valid.
pub fn check_association(
    batch: &BatchInstance,
    params: &ModelParams,
    aut: &AppearanceAutomaton,
    sol: &AssociationSolution,
) -> Vec<String> {
    let mut out = Vec::new();
    if sol.tracks.len() != batch.m() {
        out.push(format!("{} frames assigned, batch has {}", sol.tracks.len(), batch.m()));
        return out;
    }
    for (i, ks) in sol.tracks.iter().enumerate() {
        if ks.len() != batch.n(i) {
            out.push(format!("frame {i}: {} of {} detections assigned", ks.len(), batch.n(i)));
            return out;
        }
        for (j, &k) in ks.iter().enumerate() {
            if k == 0 || k as usize > sol.tau {
                out.push(format!("frame {i}: detection {j} on track {k} outside 1..={}", sol.tau));
            }
            if ks[..j].contains(&k) {
                out.push(format!("frame {i}: track {k} used twice"));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for i in 1..batch.m() {
        for (j, &k) in sol.tracks[i].iter().enumerate() {
            if let Some(pj) = sol.tracks[i - 1].iter().position(|&x| x == k) {
                if !params.near(&batch.dets[i - 1][pj], &batch.dets[i][j]) {
                    out.push(format!("track {k} moves too far between frames {} and {i}", i - 1));
                }
            }
        }
    }
    match track_costs(batch, sol.tau, aut, &sol.tracks) {
        None => out.push("a track's label sequence is rejected by the automaton".into()),
        Some(costs) => {
            if costs != sol.track_costs {
                out.push(format!("track costs {:?} differ from replay {costs:?}", sol.track_costs));
            }
            if costs.iter().sum::<i64>() != sol.objective {
                out.push(format!("objective {} differs from replayed total", sol.objective));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::{build_label_automaton, CostParams};

    fn det(cx: f64, cy: f64, label: u32) -> BatchDet {
        BatchDet {
            cx,
            cy,
            width: 10.0,
            height: 10.0,
            label,
            provenance: Provenance::Detector,
        }
    }

    #[test]
    fn tau_rule() {
        let b = |ns: &[usize]| {
            BatchInstance::new(
                (1..=ns.len() as u32).collect(),
                ns.iter().map(|&n| vec![det(0.0, 0.0, 1); n]).collect(),
            )
            .unwrap()
        };
        assert_eq!(choose_tau(&b(&[2, 3, 2]), 2), 5);
        assert_eq!(choose_tau(&b(&[1]), 0), 2);
        assert_eq!(choose_tau(&b(&[4, 4]), 1), 5);
    }

    #[test]
    fn rejects_empty_frames_and_bad_labels() {
        assert!(BatchInstance::new(vec![1], vec![vec![]]).is_err());
        assert!(BatchInstance::new(vec![], vec![]).is_err());
        let b = BatchInstance::new(vec![1], vec![vec![det(0.0, 0.0, 3)]]).unwrap();
        let aut = build_label_automaton(2, &CostParams::default()).unwrap();
        let p = ModelParams::exact(&b, 1);
        assert!(build_model(&b, &p, &aut).is_err());
    }
}
