use thiserror::Error;

use crate::algorithms::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semi-definite (factorization failed after jitter)")]
    NotPsd,

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("design does not span the requested directions: {0}")]
    DegenerateSpan(String),

    #[error("compliance table is not column-stochastic: {0}")]
    NotStochastic(String),

    #[error("invalid parameter: {0}")]
    BadParam(String),

    #[error("two evaluation arms tie for the maximum ({0} and {1})")]
    TieAtTop(usize, usize),

    #[error("rounding needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: u64, got: u64 },

    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),

    /// A safety cap stopped the run. The partial trace is kept so callers can
    /// still report what happened.
    #[error("safety cap exceeded: {reason}")]
    CapExceeded {
        reason: String,
        partial: Box<RunTrace>,
    },

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("nothing to plot: {0}")]
    EmptySelection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::BadParam(_) | Error::BadDelta(_)
        )
    }
}
