//! Command implementations behind the `tfen` binary.

pub mod commands;
pub mod io;

use tensor_fen::FenError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit code: 2 for configuration and i/o problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<FenError> for CliError {
    fn from(e: FenError) -> Self {
        match e {
            FenError::Numeric(_) => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
