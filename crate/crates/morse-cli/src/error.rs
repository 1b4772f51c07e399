use thiserror::Error;

/// Harness-level failures, each mapped to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Integrity(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<morse_core::Error> for CliError {
    fn from(e: morse_core::Error) -> Self {
        match e {
            morse_core::Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            morse_core::Error::Config(_) | morse_core::Error::Range(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
