use thiserror::Error;

/// Errors raised by the sampler, store, estimators and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AesError {
    #[error("invalid sampler state: {0}")]
    InvalidState(String),
    #[error("invalid feedback for slot {slot}: {reason}")]
    InvalidData { slot: usize, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("zero probability for slot {0}")]
    ZeroProbability(usize),
    #[error("buffer not warmed up: {occupancy}/{capacity} slots filled")]
    NotReady { occupancy: usize, capacity: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("objective is infinite: slot {0} has positive loss and zero probability")]
    InfiniteObjective(usize),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("oracle failed to converge after {0} iterations")]
    OracleFailure(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, AesError>;
