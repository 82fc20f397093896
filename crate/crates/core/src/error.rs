use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the optimizer, its building blocks and the experiment harness.
#[derive(Debug, Error)]
pub enum GassError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("objective returned non-finite value {value} at x = {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    #[error("lower bound {h_lb} is not strictly below observed value {value}")]
    LowerBoundViolation { h_lb: f64, value: f64 },

    #[error("factorization of the {dim}x{dim} preconditioner failed (epsilon {epsilon}, retried with {retry_epsilon}); min diagonal {min_diag}")]
    Factorization {
        dim: usize,
        epsilon: f64,
        retry_epsilon: f64,
        min_diag: f64,
    },

    #[error("evaluation budget {budget} is smaller than the next batch of {batch}")]
    BudgetTooSmall { budget: usize, batch: usize },

    #[error("unknown problem '{name}'; valid names: {valid}")]
    UnknownProblem { name: String, valid: String },

    #[error("problem '{0}' does not support a reduced dimension")]
    UnsupportedReduction(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = GassError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> GassError {
    GassError::InvalidParameter(msg.into())
}
