use thiserror::Error;

use crate::exprlang::{EvalError, ParseError};

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum RocError {
    /// Malformed or out-of-range input (dimensions, indices, configuration).
    #[error("invalid input: {0}")]
    Input(String),

    /// A point outside the domain of an operation (e.g. `det F <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Random sampling could not produce an admissible object.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A numerical evaluation failed (non-finite values, collapsed stencils).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The requested check does not apply at the given point.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = RocError> = std::result::Result<T, E>;
