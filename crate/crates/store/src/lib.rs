//! Durable storage for users, videos, labels, groups, annotations and jobs,
//! plus content-addressed blobs.
//!
//! [`Store`] keeps every record in memory and, when opened on a path, appends
//! each committed transaction to a checksummed log that is replayed on open.

pub mod blob;
pub mod db;
pub mod error;
mod log;
pub mod ops;
pub mod records;

pub use blob::{BlobInfo, BlobStore, FsBlobStore, MemBlobStore, ReadSeek};
pub use db::{Store, Tx, Versioned};
pub use error::StoreError;
pub use ops::{Page, VideoFilter, MAX_PAGE_SIZE};
pub use records::{
    Collection, GroupRecord, IdempotencyRecord, JobRecord, JobState, Record, Role, UserRecord, VideoRecord,
    VideoStatus,
};
