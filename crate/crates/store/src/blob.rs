//! Content-addressed blob storage keyed by sha256.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Cursor, Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BlobInfo {
    pub blob_ref: String,
    pub sha256: String,
    pub size_bytes: u64,
}

pub trait ReadSeek: Read + Seek + Send {}
impl<T: Read + Seek + Send> ReadSeek for T {}

pub trait BlobStore: Send + Sync {
    fn put(&self, data: &mut dyn Read) -> Result<BlobInfo, StoreError>;
    /// Reader over the blob and its length.
    fn open(&self, blob_ref: &str) -> Result<(Box<dyn ReadSeek>, u64), StoreError>;
    fn contains(&self, blob_ref: &str) -> bool;
    /// Filesystem path of the blob, when it lives on disk.
    fn local_path(&self, blob_ref: &str) -> Option<PathBuf>;

    fn get(&self, blob_ref: &str) -> Result<Vec<u8>, StoreError> {
        let (mut r, len) = self.open(blob_ref)?;
        let mut out = Vec::with_capacity(len as usize);
        r.read_to_end(&mut out).map_err(|e| StoreError::io(blob_ref, e))?;
        Ok(out)
    }
}

fn valid_ref(r: &str) -> bool {
    r.len() == 64 && r.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Copies `data` into `sink` while hashing it.
fn hash_copy(data: &mut dyn Read, sink: &mut dyn Write) -> io::Result<(String, u64)> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut size = 0u64;
    loop {
        let n = match data.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        hasher.update(&buf[..n]);
        sink.write_all(&buf[..n])?;
        size += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), size))
}

/// Blobs under `root/<first two hex chars>/<sha256>`.
pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("tmp")).map_err(|e| StoreError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_of(&self, blob_ref: &str) -> PathBuf {
        self.root.join(&blob_ref[..2]).join(blob_ref)
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, data: &mut dyn Read) -> Result<BlobInfo, StoreError> {
        let tmp_dir = self.root.join("tmp");
        let mut tmp = tempfile::NamedTempFile::new_in(&tmp_dir).map_err(|e| StoreError::io(&tmp_dir, e))?;
        let (sha, size) = hash_copy(data, tmp.as_file_mut()).map_err(|e| StoreError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| StoreError::io(tmp.path(), e))?;
        let dest = self.path_of(&sha);
        if !dest.exists() {
            let parent = dest.parent().expect("blob path has a parent");
            std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
            tmp.persist(&dest).map_err(|e| StoreError::io(&dest, e.error))?;
        }
        Ok(BlobInfo { blob_ref: sha.clone(), sha256: sha, size_bytes: size })
    }

    fn open(&self, blob_ref: &str) -> Result<(Box<dyn ReadSeek>, u64), StoreError> {
        if !valid_ref(blob_ref) {
            return Err(StoreError::BlobMissing(blob_ref.to_string()));
        }
        let path = self.path_of(blob_ref);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::BlobMissing(blob_ref.into())),
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        let len = file.metadata().map_err(|e| StoreError::io(&path, e))?.len();
        Ok((Box::new(file), len))
    }

    fn contains(&self, blob_ref: &str) -> bool {
        valid_ref(blob_ref) && self.path_of(blob_ref).is_file()
    }

    fn local_path(&self, blob_ref: &str) -> Option<PathBuf> {
        self.contains(blob_ref).then(|| self.path_of(blob_ref))
    }
}

#[derive(Clone)]
struct Shared(Arc<Vec<u8>>);

impl AsRef<[u8]> for Shared {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Default)]
pub struct MemBlobStore {
    blobs: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

impl MemBlobStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlobStore for MemBlobStore {
    fn put(&self, data: &mut dyn Read) -> Result<BlobInfo, StoreError> {
        let mut bytes = Vec::new();
        let (sha, size) = hash_copy(data, &mut bytes).map_err(|e| StoreError::io("<memory>", e))?;
        self.blobs.lock().unwrap().entry(sha.clone()).or_insert_with(|| Arc::new(bytes));
        Ok(BlobInfo { blob_ref: sha.clone(), sha256: sha, size_bytes: size })
    }

    fn open(&self, blob_ref: &str) -> Result<(Box<dyn ReadSeek>, u64), StoreError> {
        let bytes = self.blobs.lock().unwrap().get(blob_ref).cloned();
        let bytes = bytes.ok_or_else(|| StoreError::BlobMissing(blob_ref.to_string()))?;
        let len = bytes.len() as u64;
        Ok((Box::new(Cursor::new(Shared(bytes))), len))
    }

    fn contains(&self, blob_ref: &str) -> bool {
        self.blobs.lock().unwrap().contains_key(blob_ref)
    }

    fn local_path(&self, _blob_ref: &str) -> Option<PathBuf> {
        None
    }
}
