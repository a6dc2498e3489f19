use std::path::PathBuf;
use std::time::Duration;

use vidnote_tracker::TrackerParams;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(12 * 3600);

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PasswordCost {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for PasswordCost {
    fn default() -> Self {
        Self { memory_kib: 19_456, iterations: 2, parallelism: 1 }
    }
}

impl PasswordCost {
    /// Cheapest accepted parameters, for tests.
    pub fn minimal() -> Self {
        Self { memory_kib: 8, iterations: 1, parallelism: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    /// HMAC key for session tokens. A random key is generated when unset,
    /// which invalidates tokens on restart.
    pub token_secret: Option<Vec<u8>>,
    pub token_ttl: Duration,
    /// Shell command template with `{input}` and `{output}` placeholders that
    /// decodes a video file into a frame directory.
    pub decoder_cmd: Option<String>,
    pub tracker_workers: usize,
    pub tracker: TrackerParams,
    pub password_cost: PasswordCost,
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            token_secret: None,
            token_ttl: DEFAULT_TOKEN_TTL,
            decoder_cmd: None,
            tracker_workers: 2,
            tracker: TrackerParams::default(),
            password_cost: PasswordCost::default(),
        }
    }

    pub fn db_path(&self) -> PathBuf {
        self.data_dir.join("db")
    }

    pub fn blob_dir(&self) -> PathBuf {
        self.data_dir.join("blobs")
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.data_dir.join("frames")
    }

    pub fn tmp_dir(&self) -> PathBuf {
        self.data_dir.join("tmp")
    }
}
