use thiserror::Error;

/// Errors raised by model construction, simulation and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A model coefficient violates its contract (e.g. non-positive volatility).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Caller-supplied arguments are malformed (ordering, domain, emptiness).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A stated model condition fails at a concrete witness point.
    #[error("condition {condition} violated: {detail}")]
    ConditionViolation {
        condition: &'static str,
        detail: String,
    },

    /// An internal contract was broken; indicates a bug, not a rejection.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// A numeric procedure failed to converge or exceeded its retry cap.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
