use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("argument {0} outside the supported range")]
    Overflow(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("supercritical branching ratio a = {0} (must be < 1)")]
    Supercritical(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("event cap {cap} exceeded at t = {time}")]
    EventCap { cap: usize, time: f64 },
    #[error("Riccati iteration diverged at index {index} (|psi| = {value})")]
    Divergence { index: usize, value: f64 },
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-positive value {value} at index {index} in log-log window")]
    NonPositive { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
