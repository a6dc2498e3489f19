use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::job::TrackJobReport;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed PPM: {0}")]
    MalformedPpm(&'static str),
    #[error("frame dimensions {width}x{height} do not match {len} pixels")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("invalid frame manifest: {0}")]
    BadManifest(String),
    #[error("frame {0} is missing from the source")]
    MissingFrame(usize),
}

impl FrameError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("template patches differ in size ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("seed box lies entirely outside the {width}x{height} frame")]
    SeedOutsideFrame { width: usize, height: usize },
    #[error("invalid tracker parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Error)]
pub enum TrackJobError {
    #[error("annotation has no box track to seed from")]
    NoSeed,
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    /// The source has no usable frame around `at_ms`; carries the work done so far.
    #[error("frame source has a gap at {at_ms} ms: {reason}")]
    FrameSourceGap { at_ms: u64, reason: String, partial: TrackJobReport },
}
