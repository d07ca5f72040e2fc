//! Direct evaluation of constraints on complete assignments.
//!
//! Nothing here shares code with the filtering algorithms; it is the
//! reference the solver's answers are checked against.

use crate::constraint::Constraint;
use crate::domain::VarId;

/// Whether `values` (indexed by variable) satisfies `c`.
pub fn satisfied(c: &Constraint, values: &[i64]) -> bool {
    let val = |v: &VarId| values[v.index()];
    match c {
        Constraint::AllDifferent { vars } => {
            for i in 0..vars.len() {
                for j in i + 1..vars.len() {
                    if val(&vars[i]) == val(&vars[j]) {
                        return false;
                    }
                }
            }
            true
        }
        Constraint::Inverse { xs, ys } => {
            let forward = xs.iter().enumerate().all(|(i, x)| {
                let j = val(x);
                !(1..=ys.len() as i64).contains(&j) || val(&ys[j as usize - 1]) == i as i64 + 1
            });
            let backward = ys.iter().enumerate().all(|(j, y)| {
                let i = val(y);
                !(1..=xs.len() as i64).contains(&i) || val(&xs[i as usize - 1]) == j as i64 + 1
            });
            forward && backward
        }
        Constraint::Element {
            table,
            index,
            value,
        } => {
            let i = val(index);
            i >= 1 && (i as usize) <= table.len() && table[i as usize - 1] == val(value)
        }
        Constraint::Binary { u, v, allowed } => allowed(val(u), val(v)),
        Constraint::CostRegular {
            vars,
            automaton,
            costs,
            cost,
        } => {
            let word: Vec<i64> = vars.iter().map(val).collect();
            automaton.replay(&word, costs) == Some(val(cost))
        }
        Constraint::Sum { terms, total } => terms.iter().map(val).sum::<i64>() == val(total),
    }
}

/// Indices of the constraints violated by `values`.
pub fn violations(constraints: &[Constraint], values: &[i64]) -> Vec<usize> {
    constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| !satisfied(c, values))
        .map(|(i, _)| i)
        .collect()
}
