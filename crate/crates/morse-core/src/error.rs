use thiserror::Error;

/// Errors surfaced by the library's fallible operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("out of range: {0}")]
    Range(String),

    #[error("ordering violation: {0}")]
    Ordering(String),

    #[error("singular operation: {0}")]
    Singularity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("schedule invariant violated: {0}")]
    ScheduleInvariant(String),

    #[error("no usable data points: {0}")]
    EmptyAverage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
