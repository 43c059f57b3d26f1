use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EggsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EggsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("stage `{stage}` is missing required artifact {}", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("feature columns do not match the model dictionary: {0}")]
    ColumnMismatch(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EggsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EggsError::Io {
            path: path.into(),
            source,
        }
    }
}
