use thiserror::Error;

/// Errors raised by the pattern, probability and charting layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An internal consistency check failed. Indicates a bug, not bad input.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// The event conditioned on has probability zero.
    #[error("conditioning event has zero probability (n = {n}, m = {m})")]
    ImpossibleConditioning { n: usize, m: usize },

    #[error("observation is not finite: {0}")]
    NonFiniteObservation(f64),

    #[error("chart already signalled at t = {0}")]
    AlreadySignalled(usize),

    #[error("enumerating C({n}, {m}) arrangements exceeds the budget of {budget}")]
    BudgetExceeded { n: usize, m: usize, budget: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
