use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while building or querying private structures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside domain [0, {bound})")]
    OutOfDomain { value: f64, bound: f64 },

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("approximate-DP budget (delta = {0}) cannot be composed here")]
    ApproximateBudget(f64),

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("malformed structure file: {0}")]
    Format(String),

    #[error("unknown plan `{name}`; available plans: {available}")]
    UnknownPlan { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Checks that `value` is finite and lies in `[0, bound)`.
pub(crate) fn check_domain(value: f64, bound: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    if value < 0.0 || value >= bound {
        return Err(Error::OutOfDomain { value, bound });
    }
    Ok(())
}
