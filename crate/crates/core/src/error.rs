use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MinaError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class {0} has no examples")]
    MissingClass(usize),

    #[error("gradient check: {0}")]
    GradCheck(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MinaError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        MinaError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MinaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, MinaError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, MinaError>;
