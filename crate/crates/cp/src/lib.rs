//! A small finite-domain constraint solver.
//!
//! Integer variables with trailed domains, a propagation queue, the
//! AllDifferent / Inverse / Element / binary table / CostRegular / Sum
//! constraints, and depth-first branch-and-bound with caller-supplied
//! variable and value orderings.

mod automaton;
pub mod check;
mod constraint;
mod domain;
mod error;
mod model;
mod search;

pub use automaton::{Automaton, CostMatrix};
pub use constraint::{Constraint, ConstraintId, PairPredicate};
pub use domain::{Conflict, Domains, PropResult, VarId, BITSET_SPAN_LIMIT};
pub use error::CpError;
pub use model::Model;
pub use search::{solve, solve_all, Mode, Outcome, SearchConfig, SearchStats, Solution, ValueOrder};
