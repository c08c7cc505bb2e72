use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid run configuration; `path` is the JSON path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("experiment `{experiment}` requires a seed (set `seed` or pass --seed)")]
    MissingSeed { experiment: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: pbv_core::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
