//! Translation-only kernelized correlation filter tracker over grayscale
//! frames, plus the job runner that turns a seed box into keyframes and the
//! bounded worker pool jobs run on.

pub mod error;
pub mod fft;
pub mod frame;
pub mod job;
pub mod kcf;
pub mod pool;
pub mod synthetic;

pub use error::{FrameError, TrackJobError, TrackerError};
pub use frame::{Frame, FrameDir, FrameDirWriter, FrameSource, Manifest, MemoryFrames, MANIFEST_FILE};
pub use job::{run_track_job, TrackJobReport, EMIT_THRESHOLD_PX};
pub use kcf::{
    gaussian_kernel_response, kcf_init, kcf_step, train_dual_coefficients, Detection, Patch, TrackerParams,
    TrackerState,
};
pub use pool::{PoolError, WorkerPool};
