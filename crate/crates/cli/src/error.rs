use std::path::Path;

use glycocc::bench::BenchError;
use glycocc::homp::HompError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, flags, configuration or files.
    #[error("{0}")]
    User(String),
    /// A library invariant failed on input that passed validation.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::User(format!("{}: {e}", path.display()))
    }
}

impl From<HompError> for CliError {
    fn from(e: HompError) -> Self {
        match e {
            HompError::Config(_) | HompError::DimensionMismatch { .. } => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Model(m) => m.into(),
            BenchError::Tensor(_) | BenchError::ShapeMismatch(_) => CliError::Internal(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}
