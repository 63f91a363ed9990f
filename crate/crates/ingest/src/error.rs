use std::path::PathBuf;

use dce_core::{EmbedError, IdError, StoreError};
use thiserror::Error;

/// Failures that abort an ingest run. Per-item problems are recorded in the
/// report instead.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("raw directory {0} does not exist")]
    MissingRawDir(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("walking {path}: {message}")]
    Walk { path: PathBuf, message: String },
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("provider: {0}")]
    Provider(#[from] EmbedError),
    #[error("provider dimension {provider} does not match configured embedding_dim {config}")]
    DimensionMismatch { provider: usize, config: usize },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("invalid source path: {0}")]
    Id(#[from] IdError),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

/// Why one item could not be ingested.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct ItemError {
    pub stage: crate::report::Stage,
    pub message: String,
}

impl ItemError {
    pub fn new(stage: crate::report::Stage, message: impl std::fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}
