//! Depth-first search with branch-and-bound.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::domain::{Domains, PropResult, VarId};
use crate::error::CpError;
use crate::model::{fixpoint, Model};
use crate::Constraint;

/// Ranks candidate values for a variable given the current partial assignment.
///
/// Values missing from the returned list are not explored, so an ordering can
/// also prune symmetric branches. Values no longer in the domain are skipped.
pub type ValueOrder = dyn Fn(VarId, &Domains) -> Vec<i64> + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Satisfy,
    #[default]
    Minimize,
}

#[derive(Clone, Default)]
pub struct SearchConfig {
    /// Branching order. Variables left unfixed once it is exhausted are
    /// branched in index order with ascending values.
    pub var_order: Vec<VarId>,
    /// Falls back to ascending domain order when `None`.
    pub value_order: Option<Arc<ValueOrder>>,
    pub mode: Mode,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
}

impl SearchConfig {
    pub fn new(var_order: Vec<VarId>, mode: Mode) -> Self {
        SearchConfig {
            var_order,
            mode,
            ..Default::default()
        }
    }

    pub fn with_value_order(
        mut self,
        f: impl Fn(VarId, &Domains) -> Vec<i64> + Send + Sync + 'static,
    ) -> Self {
        self.value_order = Some(Arc::new(f));
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn with_node_limit(mut self, nodes: u64) -> Self {
        self.node_limit = Some(nodes);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    values: Vec<i64>,
    pub objective: Option<i64>,
    /// Set when minimization exhausted the search space.
    pub optimal: bool,
}

impl Solution {
    pub fn value(&self, v: VarId) -> i64 {
        self.values[v.index()]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Solved(Solution),
    Infeasible,
    /// A limit was hit; carries the incumbent if one was found.
    TimedOut(Option<Solution>),
}

impl Outcome {
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            Outcome::Solved(s) | Outcome::TimedOut(Some(s)) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub failures: u64,
    pub solutions: u64,
    pub elapsed: Duration,
}

enum Flow {
    Continue,
    Stop,
}

struct Searcher<'a> {
    constraints: &'a [Constraint],
    watchers: &'a [Vec<usize>],
    d: Domains,
    cfg: &'a SearchConfig,
    objective: Option<VarId>,
    best: Option<Solution>,
    stats: SearchStats,
    start: Instant,
    limit_hit: bool,
    collected: Option<Vec<Solution>>,
}

/// Search `model` under `cfg`.
///
/// Satisfy mode returns the first solution; minimize mode keeps improving
/// the incumbent (each new one requires a strictly smaller objective) until
/// the space is exhausted or a limit is reached.
pub fn solve(model: &Model, cfg: &SearchConfig) -> Result<(Outcome, SearchStats), CpError> {
    validate(model, cfg)?;
    let (constraints, watchers, domains) = model.parts();
    let objective = match cfg.mode {
        Mode::Minimize => Some(model.objective().ok_or(CpError::NoObjective)?),
        Mode::Satisfy => model.objective(),
    };
    let mut s = Searcher {
        constraints,
        watchers,
        d: domains.clone(),
        cfg,
        objective,
        best: None,
        stats: SearchStats::default(),
        start: Instant::now(),
        limit_hit: false,
        collected: None,
    };
    let root = fixpoint(constraints, watchers, &mut s.d, 0..constraints.len());
    let outcome = if root.is_err() {
        s.stats.failures += 1;
        Outcome::Infeasible
    } else {
        s.dfs(0);
        match (s.best.take(), s.limit_hit) {
            (best, true) => Outcome::TimedOut(best),
            (Some(mut sol), false) => {
                sol.optimal = cfg.mode == Mode::Minimize;
                Outcome::Solved(sol)
            }
            (None, false) => Outcome::Infeasible,
        }
    };
    s.stats.elapsed = s.start.elapsed();
    Ok((outcome, s.stats))
}

/// Every solution of `model`, in search order, ignoring the objective.
///
/// Stops early (returning what was found) if a limit in `cfg` is reached.
pub fn solve_all(model: &Model, cfg: &SearchConfig) -> Result<Vec<Solution>, CpError> {
    validate(model, cfg)?;
    let (constraints, watchers, domains) = model.parts();
    let mut s = Searcher {
        constraints,
        watchers,
        d: domains.clone(),
        cfg,
        objective: model.objective(),
        best: None,
        stats: SearchStats::default(),
        start: Instant::now(),
        limit_hit: false,
        collected: Some(Vec::new()),
    };
    if fixpoint(constraints, watchers, &mut s.d, 0..constraints.len()).is_ok() {
        s.dfs(0);
    }
    Ok(s.collected.unwrap_or_default())
}

fn validate(model: &Model, cfg: &SearchConfig) -> Result<(), CpError> {
    let mut seen = vec![false; model.num_vars()];
    for v in &cfg.var_order {
        match seen.get_mut(v.index()) {
            None => return Err(CpError::UnknownVar(*v)),
            Some(true) => {
                return Err(CpError::BadConfig(format!("{v} appears twice in the variable order")))
            }
            Some(s) => *s = true,
        }
    }
    Ok(())
}

impl Searcher<'_> {
    fn out_of_budget(&mut self) -> bool {
        if let Some(limit) = self.cfg.node_limit {
            if self.stats.nodes >= limit {
                self.limit_hit = true;
            }
        }
        if let Some(limit) = self.cfg.time_limit {
            if self.start.elapsed() >= limit {
                self.limit_hit = true;
            }
        }
        self.limit_hit
    }

    /// Apply a decision at the current node, the incumbent bound, then propagate.
    fn apply(&mut self, decide: impl FnOnce(&mut Domains) -> PropResult<bool>) -> PropResult {
        decide(&mut self.d)?;
        if let (Some(obj), Some(best)) = (self.objective, &self.best) {
            if self.cfg.mode == Mode::Minimize {
                self.d.set_max(obj, best.objective.unwrap() - 1)?;
            }
        }
        fixpoint(self.constraints, self.watchers, &mut self.d, [])
    }

    fn select(&self, from: usize) -> Option<(usize, VarId)> {
        let order = &self.cfg.var_order;
        if let Some(p) = (from..order.len()).find(|&p| !self.d.is_fixed(order[p])) {
            return Some((p, order[p]));
        }
        (0..self.d.len())
            .map(VarId)
            .find(|&v| !self.d.is_fixed(v))
            .map(|v| (order.len(), v))
    }

    fn record(&mut self) -> Flow {
        self.stats.solutions += 1;
        let values: Vec<i64> = (0..self.d.len()).map(|i| self.d.min(VarId(i))).collect();
        let objective = self.objective.map(|o| values[o.index()]);
        let sol = Solution {
            values,
            objective,
            optimal: false,
        };
        if let Some(all) = &mut self.collected {
            all.push(sol);
            return Flow::Continue;
        }
        self.best = Some(sol);
        match self.cfg.mode {
            Mode::Satisfy => Flow::Stop,
            Mode::Minimize => Flow::Continue,
        }
    }

    fn dfs(&mut self, from: usize) -> Flow {
        if self.out_of_budget() {
            return Flow::Stop;
        }
        self.stats.nodes += 1;
        let Some((pos, var)) = self.select(from) else {
            return self.record();
        };

        if !self.d.is_enumerable(var) {
            // wide bounds-only domain: lo, or everything above lo
            let lo = self.d.min(var);
            let mark = self.d.trail_len();
            for left in [true, false] {
                let res = if left {
                    self.apply(|d| d.assign(var, lo))
                } else {
                    self.apply(|d| d.set_min(var, lo + 1))
                };
                let flow = match res {
                    Ok(()) => self.dfs(pos),
                    Err(_) => {
                        self.stats.failures += 1;
                        Flow::Continue
                    }
                };
                self.d.restore(mark);
                if let Flow::Stop = flow {
                    return Flow::Stop;
                }
            }
            return Flow::Continue;
        }

        let candidates = match &self.cfg.value_order {
            Some(order) if pos < self.cfg.var_order.len() => order(var, &self.d),
            _ => self.d.values(var),
        };
        for v in candidates {
            if !self.d.contains(var, v) {
                continue;
            }
            let mark = self.d.trail_len();
            let flow = match self.apply(|d| d.assign(var, v)) {
                Ok(()) => self.dfs(pos),
                Err(_) => {
                    self.stats.failures += 1;
                    Flow::Continue
                }
            };
            self.d.restore(mark);
            if let Flow::Stop = flow {
                return Flow::Stop;
            }
        }
        Flow::Continue
    }
}
