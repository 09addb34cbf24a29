use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: index {index} out of range for {bound} rows (position {position})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
        position: usize,
    },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("duplicate node: take {take}, view {view}, segment {segment}, type {node_type}")]
    DuplicateNode {
        take: String,
        view: u32,
        segment: u32,
        node_type: String,
    },

    #[error("graph integrity: {0}")]
    GraphIntegrity(String),

    #[error("graph validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("configuration: {0}")]
    Config(String),

    #[error("ingestion error in {}: {field}: {message}", path.display())]
    Ingestion {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn ingestion(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Ingestion {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by invalid input data or configuration rather
    /// than by the runtime environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::GraphIntegrity(_)
                | Error::DuplicateNode { .. }
                | Error::Config(_)
                | Error::Ingestion { .. }
                | Error::Format(_)
                | Error::Split(_)
                | Error::Dimension { .. }
                | Error::Index { .. }
        )
    }
}
