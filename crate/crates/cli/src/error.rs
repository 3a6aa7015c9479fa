use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Solver(#[from] frictionless::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(e) if e.is_domain() => 2,
            CliError::Solver(_) => 3,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Json(_) => 1,
        }
    }
}
