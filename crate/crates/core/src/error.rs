use thiserror::Error;

use crate::exploration::RegenerationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The successor search passed the configured radius cap without finding an open vertex.
    #[error("successor search exhausted at radius cap {radius_cap}")]
    SearchExhausted { radius_cap: u64 },

    #[error("no open forward vertex within oracle window of radius {window}")]
    OracleWindowTooSmall { window: u64 },

    /// The joint process hit its step budget. Whatever regenerations were
    /// completed before that are handed back.
    #[error("step budget of {step_cap} exhausted after {} regenerations", partial.len())]
    BudgetExhausted {
        step_cap: u64,
        partial: Vec<RegenerationRecord>,
    },

    #[error("fit undefined: {0}")]
    FitUndefined(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
