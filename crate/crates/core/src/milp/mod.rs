//! Self-contained MILP engine: a dense two-phase simplex for relaxations and
//! branch-and-bound over binary variables, plus the Big-M encoding of a
//! confidence region.

mod branch;
mod encode;
mod lp_format;
mod model;
mod simplex;

use thiserror::Error;

pub use branch::{branch_and_bound, branch_and_bound_with, BranchOptions, DEFAULT_NODE_LIMIT};
pub use encode::{encode_region, solve_over_region, verify_big_m, RegionSolve, MAX_ESCALATIONS};
pub use lp_format::to_lp_text;
pub use model::{Constraint, MilpModel, Relation, Sense, SolveOutcome, SolveStatus, Tolerances};
pub use simplex::{simplex_solve, simplex_solve_with};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numeric instability: {0}")]
    NumericInstability(String),

    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}
