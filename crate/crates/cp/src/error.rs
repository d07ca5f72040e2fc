use thiserror::Error;

use crate::domain::VarId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CpError {
    #[error("empty range: lo {lo} > hi {hi}")]
    EmptyRange { lo: i64, hi: i64 },
    #[error("variable {0} does not belong to this model")]
    UnknownVar(VarId),
    #[error("constraint needs at least one variable")]
    EmptyScope,
    #[error("invalid automaton: {0}")]
    InvalidAutomaton(String),
    #[error("negative transition cost {0}")]
    NegativeCost(i64),
    #[error("cost matrix shape does not match the automaton or sequence")]
    CostShape,
    #[error("invalid search configuration: {0}")]
    BadConfig(String),
    #[error("minimize mode requires an objective variable")]
    NoObjective,
}
