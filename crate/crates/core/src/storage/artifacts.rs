use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::StorageError;
use crate::domain::ArtifactRef;

/// Content-addressed blob storage for generated images.
pub trait ArtifactStore: Send + Sync {
    fn put(&self, bytes: &[u8]) -> Result<ArtifactRef, StorageError>;
    fn get(&self, id: &str) -> Result<Option<Vec<u8>>, StorageError>;
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn relative_path(id: &str) -> PathBuf {
    PathBuf::from("artifacts").join(format!("{id}.bin"))
}

/// Stores `artifacts/<hash>.bin` under a root directory.
#[derive(Debug, Clone)]
pub struct FsArtifactStore {
    root: PathBuf,
}

impl FsArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.root.join(relative_path(id))
    }
}

impl ArtifactStore for FsArtifactStore {
    fn put(&self, bytes: &[u8]) -> Result<ArtifactRef, StorageError> {
        let id = content_hash(bytes);
        let path = self.path_of(&id);
        if !path.exists() {
            let dir = path.parent().expect("artifact path has a parent");
            fs::create_dir_all(dir).map_err(|e| StorageError::io(dir, e))?;
            let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
            let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
            fs::write(&tmp, bytes).map_err(|e| StorageError::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| StorageError::io(&path, e))?;
        }
        Ok(ArtifactRef {
            id: id.clone(),
            path: relative_path(&id),
        })
    }

    fn get(&self, id: &str) -> Result<Option<Vec<u8>>, StorageError> {
        let path = self.path_of(id);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StorageError::io(path, e)),
        }
    }
}

#[derive(Debug, Default)]
pub struct MemoryArtifactStore {
    blobs: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl MemoryArtifactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.lock().expect("artifact lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn remove(&self, id: &str) {
        self.blobs.lock().expect("artifact lock").remove(id);
    }
}

impl ArtifactStore for MemoryArtifactStore {
    fn put(&self, bytes: &[u8]) -> Result<ArtifactRef, StorageError> {
        let id = content_hash(bytes);
        self.blobs
            .lock()
            .expect("artifact lock")
            .entry(id.clone())
            .or_insert_with(|| bytes.to_vec());
        Ok(ArtifactRef {
            path: relative_path(&id),
            id,
        })
    }

    fn get(&self, id: &str) -> Result<Option<Vec<u8>>, StorageError> {
        Ok(self.blobs.lock().expect("artifact lock").get(id).cloned())
    }
}
