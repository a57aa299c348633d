use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Schema(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(cvqss_core::Error),
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        CliError::Schema(msg.into())
    }

    /// 2 for anything wrong with the inputs, 1 when a check fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Core(cvqss_core::Error::AttemptsExhausted { .. })
            | CliError::Core(cvqss_core::Error::VerificationFailed(_)) => 1,
            _ => 2,
        }
    }
}

impl From<cvqss_core::Error> for CliError {
    fn from(e: cvqss_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(format!("csv: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
