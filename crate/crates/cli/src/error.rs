use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Core(#[from] saddlemix_core::Error),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// 2 for bad input, 3 for numeric or modelling failures.
    pub fn exit_code(&self) -> i32 {
        use saddlemix_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Verification(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidArgument(_)
                | E::DimensionMismatch { .. }
                | E::InvalidProposal { .. }
                | E::InvalidDistribution { .. }
                | E::TargetUnreachable { .. }
                | E::Parse { .. }
                | E::Io(_) => 2,
                _ => 3,
            },
        }
    }
}
