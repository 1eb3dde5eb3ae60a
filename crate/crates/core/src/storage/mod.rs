//! Persistence: stimulus manifests, append-only session files,
//! content-addressed artifacts and CSV export.

pub mod artifacts;
pub mod export;
pub mod manifest;
pub mod session_file;

use std::path::PathBuf;

use thiserror::Error;

pub use artifacts::{ArtifactStore, FsArtifactStore, MemoryArtifactStore};
pub use export::export_csv;
pub use manifest::{load_manifest, parse_manifest, StimulusManifest};
pub use session_file::{read_session, read_sessions_dir, SessionWriter};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("session file {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl StorageError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StorageError::Io {
            path: path.into(),
            source,
        }
    }
}
