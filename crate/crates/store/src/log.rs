//! Append-only transaction log.
//!
//! Each committed transaction is one frame: `[len: u32 LE][crc32: u32 LE][payload]`.
//! A frame whose header or payload is short, or whose checksum does not match,
//! ends the log; on open such a torn tail is truncated away.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::StoreError;

const HEADER: usize = 8;
const MAX_FRAME: usize = 1 << 30;

pub(crate) fn encode(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Complete frames at the start of `buf` and the number of bytes they span.
pub(crate) fn decode(buf: &[u8]) -> (Vec<&[u8]>, usize) {
    let mut frames = Vec::new();
    let mut at = 0;
    while buf.len() - at >= HEADER {
        let len = u32::from_le_bytes(buf[at..at + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[at + 4..at + 8].try_into().unwrap());
        if len > MAX_FRAME || buf.len() - at - HEADER < len {
            break;
        }
        let payload = &buf[at + HEADER..at + HEADER + len];
        if crc32fast::hash(payload) != crc {
            break;
        }
        frames.push(payload);
        at += HEADER + len;
    }
    (frames, at)
}

pub(crate) struct LogFile {
    path: PathBuf,
    file: File,
    offset: u64,
}

impl LogFile {
    /// Opens or creates the log, truncating any torn tail. Returns every committed payload.
    pub(crate) fn open(path: &Path) -> Result<(Self, Vec<Vec<u8>>), StoreError> {
        let io = |e| StoreError::io(path, e);
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path).map_err(io)?;
        file.lock().map_err(io)?;
        let mut log = Self { path: path.to_path_buf(), file, offset: 0 };
        let result = log.read_tail(true);
        log.file.unlock().map_err(io)?;
        result.map(|frames| (log, frames))
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    /// Reads frames appended past the known offset. Caller holds a lock;
    /// `exclusive` permits truncating a torn tail left by a crashed writer.
    fn read_tail(&mut self, exclusive: bool) -> Result<Vec<Vec<u8>>, StoreError> {
        let io = |e| StoreError::io(&self.path, e);
        let len = self.file.metadata().map_err(io)?.len();
        if len == self.offset {
            return Ok(Vec::new());
        }
        if len < self.offset {
            return Err(StoreError::Corrupt { path: self.path.clone(), reason: "log shrank under us".into() });
        }
        self.file.seek(SeekFrom::Start(self.offset)).map_err(io)?;
        let mut buf = Vec::with_capacity((len - self.offset) as usize);
        (&self.file).take(len - self.offset).read_to_end(&mut buf).map_err(io)?;
        let (frames, used) = decode(&buf);
        let frames: Vec<Vec<u8>> = frames.into_iter().map(<[u8]>::to_vec).collect();
        let end = self.offset + used as u64;
        if exclusive && end < len {
            tracing::warn!(path = %self.path.display(), dropped = len - end, "truncating torn log tail");
            self.file.set_len(end).map_err(io)?;
            self.file.sync_all().map_err(io)?;
        }
        self.offset = end;
        Ok(frames)
    }

    /// Frames committed by other handles since the last read.
    pub(crate) fn catch_up(&mut self) -> Result<Vec<Vec<u8>>, StoreError> {
        self.file.lock_shared().map_err(|e| StoreError::io(&self.path, e))?;
        let result = self.read_tail(false);
        self.file.unlock().map_err(|e| StoreError::io(&self.path, e))?;
        result
    }

    /// Runs `f` under the exclusive file lock after catching up, then appends
    /// and syncs the payload it returns, if any.
    pub(crate) fn commit_with<R, E: From<StoreError>>(
        &mut self,
        f: impl FnOnce(Vec<Vec<u8>>) -> Result<(Option<Vec<u8>>, R), E>,
    ) -> Result<R, E> {
        self.file.lock().map_err(|e| StoreError::io(&self.path, e))?;
        let result = self.commit_locked(f);
        self.file.unlock().map_err(|e| StoreError::io(&self.path, e))?;
        result
    }

    fn commit_locked<R, E: From<StoreError>>(
        &mut self,
        f: impl FnOnce(Vec<Vec<u8>>) -> Result<(Option<Vec<u8>>, R), E>,
    ) -> Result<R, E> {
        let behind = self.read_tail(true)?;
        let (payload, out) = f(behind)?;
        if let Some(payload) = payload {
            self.append(&payload)?;
        }
        Ok(out)
    }

    fn append(&mut self, payload: &[u8]) -> Result<(), StoreError> {
        let io = |e| StoreError::io(&self.path, e);
        let frame = encode(payload);
        self.file.seek(SeekFrom::Start(self.offset)).map_err(io)?;
        self.file.write_all(&frame).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.offset += frame.len() as u64;
        Ok(())
    }
}
