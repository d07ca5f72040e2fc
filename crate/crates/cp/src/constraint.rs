//! Posted constraints and their filtering algorithms.

use std::fmt;
use std::sync::Arc;

use crate::automaton::{Automaton, CostMatrix};
use crate::domain::{Domains, PropResult, VarId};

/// Predicate on a pair of values, used by [`Constraint::Binary`].
pub type PairPredicate = Arc<dyn Fn(i64, i64) -> bool + Send + Sync>;

/// Handle returned by the `post_*` methods of [`Model`](crate::Model).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintId(pub(crate) usize);

#[derive(Clone)]
pub enum Constraint {
    AllDifferent {
        vars: Vec<VarId>,
    },
    /// `xs[i] = j  <=>  ys[j] = i` with 1-based values; values outside the
    /// other array's index range carry no obligation.
    Inverse {
        xs: Vec<VarId>,
        ys: Vec<VarId>,
    },
    /// `value = table[index]` with a 1-based index.
    Element {
        table: Vec<i64>,
        index: VarId,
        value: VarId,
    },
    Binary {
        u: VarId,
        v: VarId,
        allowed: PairPredicate,
    },
    CostRegular {
        vars: Vec<VarId>,
        automaton: Arc<Automaton>,
        costs: Arc<CostMatrix>,
        cost: VarId,
    },
    Sum {
        terms: Vec<VarId>,
        total: VarId,
    },
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:?})", self.kind(), self.scope())
    }
}

impl Constraint {
    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::AllDifferent { .. } => "all_different",
            Constraint::Inverse { .. } => "inverse",
            Constraint::Element { .. } => "element",
            Constraint::Binary { .. } => "binary",
            Constraint::CostRegular { .. } => "cost_regular",
            Constraint::Sum { .. } => "sum",
        }
    }

    pub fn scope(&self) -> Vec<VarId> {
        match self {
            Constraint::AllDifferent { vars } => vars.clone(),
            Constraint::Inverse { xs, ys } => xs.iter().chain(ys).copied().collect(),
            Constraint::Element { index, value, .. } => vec![*index, *value],
            Constraint::Binary { u, v, .. } => vec![*u, *v],
            Constraint::CostRegular { vars, cost, .. } => {
                vars.iter().copied().chain(std::iter::once(*cost)).collect()
            }
            Constraint::Sum { terms, total } => {
                terms.iter().copied().chain(std::iter::once(*total)).collect()
            }
        }
    }

    /// Filter the domains of this constraint's scope until it is locally stable.
    pub fn propagate(&self, d: &mut Domains) -> PropResult {
        match self {
            Constraint::AllDifferent { vars } => all_different(d, vars),
            Constraint::Inverse { xs, ys } => inverse(d, xs, ys),
            Constraint::Element {
                table,
                index,
                value,
            } => element(d, table, *index, *value),
            Constraint::Binary { u, v, allowed } => binary(d, *u, *v, allowed.as_ref()),
            Constraint::CostRegular {
                vars,
                automaton,
                costs,
                cost,
            } => cost_regular(d, vars, automaton, costs, *cost),
            Constraint::Sum { terms, total } => sum(d, terms, *total),
        }
    }
}

fn all_different(d: &mut Domains, vars: &[VarId]) -> PropResult {
    loop {
        let mut changed = false;

        // value elimination
        let mut fresh = true;
        while fresh {
            fresh = false;
            for (i, &x) in vars.iter().enumerate() {
                if let Some(val) = d.value(x) {
                    for (j, &y) in vars.iter().enumerate() {
                        if i != j && d.remove(y, val)? {
                            fresh = true;
                            changed = true;
                        }
                    }
                }
            }
        }

        // pigeonhole over the union of enumerable domains
        if vars.iter().all(|&x| d.is_enumerable(x)) {
            let mut union: Vec<i64> = vars.iter().flat_map(|&x| d.values(x)).collect();
            union.sort_unstable();
            union.dedup();
            if union.len() < vars.len() {
                return Err(crate::Conflict);
            }
        }

        // Hall intervals
        let mut lows: Vec<i64> = vars.iter().map(|&x| d.min(x)).collect();
        let mut highs: Vec<i64> = vars.iter().map(|&x| d.max(x)).collect();
        lows.sort_unstable();
        lows.dedup();
        highs.sort_unstable();
        highs.dedup();
        'outer: for &a in &lows {
            for &b in &highs {
                if b < a {
                    continue;
                }
                let width = b - a + 1;
                let inside = vars
                    .iter()
                    .filter(|&&x| d.min(x) >= a && d.max(x) <= b)
                    .count() as i64;
                if inside > width {
                    return Err(crate::Conflict);
                }
                if inside == width {
                    for &x in vars {
                        if d.min(x) >= a && d.max(x) <= b {
                            continue;
                        }
                        if d.is_enumerable(x) {
                            for val in a..=b {
                                changed |= d.remove(x, val)?;
                            }
                        } else {
                            if d.min(x) >= a && d.min(x) <= b {
                                changed |= d.set_min(x, b + 1)?;
                            }
                            if d.max(x) >= a && d.max(x) <= b {
                                changed |= d.set_max(x, a - 1)?;
                            }
                        }
                    }
                    if changed {
                        break 'outer;
                    }
                }
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

fn inverse(d: &mut Domains, xs: &[VarId], ys: &[VarId]) -> PropResult {
    fn side(d: &mut Domains, from: &[VarId], to: &[VarId]) -> PropResult<bool> {
        let mut changed = false;
        for (i, &x) in from.iter().enumerate() {
            let me = i as i64 + 1;
            for j in d.values(x) {
                if j >= 1 && j as usize <= to.len() && !d.contains(to[j as usize - 1], me) {
                    changed |= d.remove(x, j)?;
                }
            }
            if let Some(j) = d.value(x) {
                if j >= 1 && j as usize <= to.len() {
                    changed |= d.assign(to[j as usize - 1], me)?;
                }
            }
        }
        Ok(changed)
    }
    loop {
        let a = side(d, xs, ys)?;
        let b = side(d, ys, xs)?;
        if !a && !b {
            return Ok(());
        }
    }
}

fn element(d: &mut Domains, table: &[i64], index: VarId, value: VarId) -> PropResult {
    loop {
        let mut changed = d.retain(index, |i| i >= 1 && i as usize <= table.len())?;
        for i in d.values(index) {
            if !d.contains(value, table[i as usize - 1]) {
                changed |= d.remove(index, i)?;
            }
        }
        let mut supported: Vec<i64> = d
            .values(index)
            .into_iter()
            .map(|i| table[i as usize - 1])
            .collect();
        supported.sort_unstable();
        supported.dedup();
        if supported.is_empty() {
            return Err(crate::Conflict);
        }
        if d.is_enumerable(value) {
            for v in d.values(value) {
                if supported.binary_search(&v).is_err() {
                    changed |= d.remove(value, v)?;
                }
            }
        } else {
            changed |= d.set_min(value, supported[0])?;
            changed |= d.set_max(value, *supported.last().unwrap())?;
        }
        if !changed {
            return Ok(());
        }
    }
}

fn binary(d: &mut Domains, u: VarId, v: VarId, allowed: &dyn Fn(i64, i64) -> bool) -> PropResult {
    let vs = d.values(v);
    for a in d.values(u) {
        if !vs.iter().any(|&b| allowed(a, b)) {
            d.remove(u, a)?;
        }
    }
    let us = d.values(u);
    for b in d.values(v) {
        if !us.iter().any(|&a| allowed(a, b)) {
            d.remove(v, b)?;
        }
    }
    Ok(())
}

const INF: i64 = i64::MAX / 4;

fn cost_regular(
    d: &mut Domains,
    vars: &[VarId],
    aut: &Automaton,
    costs: &CostMatrix,
    cost: VarId,
) -> PropResult {
    let n = vars.len();
    let s = aut.states();
    loop {
        let syms: Vec<Vec<i64>> = vars
            .iter()
            .map(|&x| {
                d.values(x)
                    .into_iter()
                    .filter(|&a| a >= 1 && a as usize <= aut.alphabet())
                    .collect()
            })
            .collect();

        // forward layer: min and max cost from the initial state
        let mut fmin = vec![INF; (n + 1) * s];
        let mut fmax = vec![-INF; (n + 1) * s];
        fmin[aut.initial()] = 0;
        fmax[aut.initial()] = 0;
        for l in 0..n {
            for st in 0..s {
                let (lo, hi) = (fmin[l * s + st], fmax[l * s + st]);
                if lo >= INF {
                    continue;
                }
                for &a in &syms[l] {
                    if let Some(t) = aut.next(st, a) {
                        let c = costs.get(l, a, st);
                        let k = (l + 1) * s + t;
                        fmin[k] = fmin[k].min(lo + c);
                        fmax[k] = fmax[k].max(hi + c);
                    }
                }
            }
        }

        // backward layer: min and max cost to an accepting state
        let mut bmin = vec![INF; (n + 1) * s];
        let mut bmax = vec![-INF; (n + 1) * s];
        for st in 0..s {
            if aut.is_accepting(st) {
                bmin[n * s + st] = 0;
                bmax[n * s + st] = 0;
            }
        }
        for l in (0..n).rev() {
            for st in 0..s {
                for &a in &syms[l] {
                    if let Some(t) = aut.next(st, a) {
                        let k = (l + 1) * s + t;
                        if bmin[k] >= INF {
                            continue;
                        }
                        let c = costs.get(l, a, st);
                        bmin[l * s + st] = bmin[l * s + st].min(bmin[k] + c);
                        bmax[l * s + st] = bmax[l * s + st].max(bmax[k] + c);
                    }
                }
            }
        }

        let best = bmin[aut.initial()];
        let worst = bmax[aut.initial()];
        if best >= INF {
            return Err(crate::Conflict);
        }
        let mut changed = d.set_min(cost, best)?;
        changed |= d.set_max(cost, worst)?;
        let (zlo, zhi) = (d.min(cost), d.max(cost));

        for l in 0..n {
            for &a in &syms[l] {
                let supported = (0..s).any(|st| {
                    let lo = fmin[l * s + st];
                    if lo >= INF {
                        return false;
                    }
                    let Some(t) = aut.next(st, a) else {
                        return false;
                    };
                    let k = (l + 1) * s + t;
                    if bmin[k] >= INF {
                        return false;
                    }
                    let c = costs.get(l, a, st);
                    lo + c + bmin[k] <= zhi && fmax[l * s + st] + c + bmax[k] >= zlo
                });
                if !supported {
                    changed |= d.remove(vars[l], a)?;
                }
            }
            // values outside the alphabet never spell a word
            let x = vars[l];
            if d.min(x) < 1 {
                changed |= d.set_min(x, 1)?;
            }
            if d.max(x) > aut.alphabet() as i64 {
                changed |= d.set_max(x, aut.alphabet() as i64)?;
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

fn sum(d: &mut Domains, terms: &[VarId], total: VarId) -> PropResult {
    loop {
        let lo: i64 = terms.iter().map(|&t| d.min(t)).fold(0, i64::saturating_add);
        let hi: i64 = terms.iter().map(|&t| d.max(t)).fold(0, i64::saturating_add);
        let mut changed = d.set_min(total, lo)?;
        changed |= d.set_max(total, hi)?;
        let (zlo, zhi) = (d.min(total), d.max(total));
        for &t in terms {
            let others_hi = hi.saturating_sub(d.max(t));
            let others_lo = lo.saturating_sub(d.min(t));
            changed |= d.set_min(t, zlo.saturating_sub(others_hi))?;
            changed |= d.set_max(t, zhi.saturating_sub(others_lo))?;
        }
        if !changed {
            return Ok(());
        }
    }
}
