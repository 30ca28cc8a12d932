use thiserror::Error;

use crate::milp::SolverError;

#[derive(Debug, Error)]
pub enum RiiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank-deficient design: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    /// The requested threshold cannot certify coverage `1 - alpha`.
    #[error("coverage target unreachable: {0}")]
    CoverageUnreachable(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = RiiError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> RiiError {
    RiiError::InvalidArgument(msg.into())
}
