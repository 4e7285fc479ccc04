use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}: {reason}")]
    Load {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("training diverged: non-finite loss at epoch {epoch} (learning rate {learning_rate})")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("stratification: {0}")]
    Stratification(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("invalid config field {field}: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Load { .. } => "load",
            Error::Argument(_) => "argument",
            Error::Invariant(_) => "invariant",
            Error::TrainingData(_) => "training_data",
            Error::Diverged { .. } => "diverged",
            Error::Stratification(_) => "stratification",
            Error::Dimension(_) => "dimension",
            Error::Artifact(_) => "artifact",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
