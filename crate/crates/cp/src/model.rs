use std::collections::VecDeque;
use std::sync::Arc;

use crate::automaton::{Automaton, CostMatrix};
use crate::check;
use crate::constraint::{Constraint, ConstraintId, PairPredicate};
use crate::domain::{Conflict, Domains, PropResult, VarId};
use crate::error::CpError;

/// Variables, posted constraints and an optional objective.
#[derive(Clone, Debug, Default)]
pub struct Model {
    domains: Domains,
    ranges: Vec<(i64, i64)>,
    constraints: Vec<Constraint>,
    watchers: Vec<Vec<usize>>,
    objective: Option<VarId>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    /// New variable with domain `lo..=hi`.
    pub fn new_var(&mut self, lo: i64, hi: i64) -> Result<VarId, CpError> {
        if lo > hi {
            return Err(CpError::EmptyRange { lo, hi });
        }
        self.ranges.push((lo, hi));
        self.watchers.push(Vec::new());
        Ok(self.domains.push(lo, hi))
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn domains(&self) -> &Domains {
        &self.domains
    }

    /// Current domain values of `v` (bounds only for wide domains).
    pub fn domain(&self, v: VarId) -> Vec<i64> {
        if self.domains.is_enumerable(v) {
            self.domains.values(v)
        } else {
            vec![self.domains.min(v), self.domains.max(v)]
        }
    }

    pub fn objective(&self) -> Option<VarId> {
        self.objective
    }

    pub fn minimize(&mut self, v: VarId) -> Result<(), CpError> {
        self.check_vars(&[v])?;
        self.objective = Some(v);
        Ok(())
    }

    fn check_vars(&self, vars: &[VarId]) -> Result<(), CpError> {
        match vars.iter().find(|v| v.0 >= self.domains.len()) {
            Some(&v) => Err(CpError::UnknownVar(v)),
            None => Ok(()),
        }
    }

    fn post(&mut self, c: Constraint) -> Result<ConstraintId, CpError> {
        let scope = c.scope();
        self.check_vars(&scope)?;
        let id = self.constraints.len();
        let mut seen = scope;
        seen.sort_unstable();
        seen.dedup();
        for v in seen {
            self.watchers[v.0].push(id);
        }
        self.constraints.push(c);
        Ok(ConstraintId(id))
    }

    pub fn post_all_different(&mut self, vars: &[VarId]) -> Result<ConstraintId, CpError> {
        if vars.is_empty() {
            return Err(CpError::EmptyScope);
        }
        self.post(Constraint::AllDifferent {
            vars: vars.to_vec(),
        })
    }

    pub fn post_inverse(&mut self, xs: &[VarId], ys: &[VarId]) -> Result<ConstraintId, CpError> {
        if xs.is_empty() || ys.is_empty() {
            return Err(CpError::EmptyScope);
        }
        self.post(Constraint::Inverse {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
        })
    }

    pub fn post_element(
        &mut self,
        table: &[i64],
        index: VarId,
        value: VarId,
    ) -> Result<ConstraintId, CpError> {
        if table.is_empty() {
            return Err(CpError::EmptyScope);
        }
        self.post(Constraint::Element {
            table: table.to_vec(),
            index,
            value,
        })
    }

    pub fn post_binary_allowed(
        &mut self,
        u: VarId,
        v: VarId,
        allowed: impl Fn(i64, i64) -> bool + Send + Sync + 'static,
    ) -> Result<ConstraintId, CpError> {
        let allowed: PairPredicate = Arc::new(allowed);
        self.post(Constraint::Binary { u, v, allowed })
    }

    pub fn post_cost_regular(
        &mut self,
        vars: &[VarId],
        automaton: Arc<Automaton>,
        costs: Arc<CostMatrix>,
        cost: VarId,
    ) -> Result<ConstraintId, CpError> {
        if vars.is_empty() {
            return Err(CpError::EmptyScope);
        }
        let shape_ok = costs.alphabet() == automaton.alphabet()
            && costs.states() == automaton.states()
            && costs.positions().is_none_or(|p| p >= vars.len());
        if !shape_ok {
            return Err(CpError::CostShape);
        }
        self.post(Constraint::CostRegular {
            vars: vars.to_vec(),
            automaton,
            costs,
            cost,
        })
    }

    pub fn post_sum(&mut self, terms: &[VarId], total: VarId) -> Result<ConstraintId, CpError> {
        self.post(Constraint::Sum {
            terms: terms.to_vec(),
            total,
        })
    }

    /// Run every propagator to a common fixpoint, tightening the model's domains.
    pub fn propagate(&mut self) -> PropResult {
        let all = 0..self.constraints.len();
        let res = fixpoint(&self.constraints, &self.watchers, &mut self.domains, all);
        self.domains.clear_trail();
        res
    }

    /// Indices of constraints violated by a complete assignment, also
    /// reporting values outside a variable's declared range as a violation
    /// of `usize::MAX`.
    pub fn violations(&self, values: &[i64]) -> Vec<usize> {
        let mut out = check::violations(&self.constraints, values);
        let out_of_range = self
            .ranges
            .iter()
            .zip(values)
            .any(|(&(lo, hi), &v)| v < lo || v > hi);
        if out_of_range || values.len() != self.ranges.len() {
            out.push(usize::MAX);
        }
        out
    }

    pub(crate) fn parts(&self) -> (&[Constraint], &[Vec<usize>], &Domains) {
        (&self.constraints, &self.watchers, &self.domains)
    }
}

/// Propagation queue: run `initial` propagators, then every propagator
/// watching a variable that changed, until nothing changes.
pub(crate) fn fixpoint(
    constraints: &[Constraint],
    watchers: &[Vec<usize>],
    d: &mut Domains,
    initial: impl IntoIterator<Item = usize>,
) -> PropResult {
    let mut queued = vec![false; constraints.len()];
    let mut queue = VecDeque::new();
    for c in initial {
        if !queued[c] {
            queued[c] = true;
            queue.push_back(c);
        }
    }
    enqueue_touched(watchers, d, &mut queued, &mut queue, None);
    while let Some(c) = queue.pop_front() {
        queued[c] = false;
        if let Err(Conflict) = constraints[c].propagate(d) {
            d.take_touched();
            return Err(Conflict);
        }
        enqueue_touched(watchers, d, &mut queued, &mut queue, Some(c));
    }
    Ok(())
}

fn enqueue_touched(
    watchers: &[Vec<usize>],
    d: &mut Domains,
    queued: &mut [bool],
    queue: &mut VecDeque<usize>,
    source: Option<usize>,
) {
    for v in d.take_touched() {
        for &c in &watchers[v.0] {
            // every propagator leaves its own scope locally stable
            if Some(c) != source && !queued[c] {
                queued[c] = true;
                queue.push_back(c);
            }
        }
    }
}
