use std::path::PathBuf;

use thiserror::Error;

use vidnote_core::LabelId;

use crate::records::Collection;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{collection}/{key}: expected version {expected}, found {}", actual.map_or("none".to_string(), |v| v.to_string()))]
    VersionConflict { collection: Collection, key: String, expected: u64, actual: Option<u64> },
    #[error("{collection}/{key} not found")]
    NotFound { collection: Collection, key: String },
    #[error("{collection}/{key} already exists")]
    AlreadyExists { collection: Collection, key: String },
    #[error("label {0} is still referenced by annotations")]
    LabelInUse(LabelId),
    #[error("blob {0} missing")]
    BlobMissing(String),
    #[error("page size {0} outside [1, 200]")]
    InvalidPageSize(usize),
    #[error("record {collection}/{key} does not decode: {source}")]
    Decode { collection: Collection, key: String, source: serde_json::Error },
    #[error("corrupt log {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn is_conflict(&self) -> bool {
        matches!(self, Self::VersionConflict { .. })
    }
}
