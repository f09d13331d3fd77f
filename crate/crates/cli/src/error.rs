use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] herdlab_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {msg}")]
    Io { path: String, msg: String },

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }
}
