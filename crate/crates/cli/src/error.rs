use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("numerical abort: {0}")]
    Numeric(#[from] afflow::Error),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// `2` for configuration problems, `3` for everything that stops a valid run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            _ => 3,
        }
    }
}
