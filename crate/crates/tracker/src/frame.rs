//! Grayscale frames and the on-disk frame directory format.
//!
//! A frame directory holds binary PPM (P6) files named `frame_%06d.ppm` and a
//! `manifest.json` mapping frame index to presentation time:
//!
//! ```json
//! {"width": 64, "height": 64, "frameRate": 25.0, "durationMs": 4000,
//!  "frames": [{"index": 0, "ms": 0}, {"index": 1, "ms": 40}]}
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::FrameError;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(FrameError::BadDimensions { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    /// Converts interleaved RGB with `0.299 R + 0.587 G + 0.114 B`, rounded.
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self, FrameError> {
        if rgb.len() != width * height * 3 {
            return Err(FrameError::BadDimensions { width, height, len: rgb.len() / 3 });
        }
        let pixels = rgb.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel-index coordinates, clamping to the
    /// border outside the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let p = |xx, yy| self.get(xx, yy) as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn read_ppm(path: &Path) -> Result<Self, FrameError> {
        let file = fs::File::open(path).map_err(|e| FrameError::io(path, e))?;
        decode_ppm(BufReader::new(file)).map_err(|e| match e {
            FrameError::Io { source, .. } => FrameError::io(path, source),
            other => other,
        })
    }

    /// Writes the frame as a P6 file with R = G = B = intensity.
    pub fn write_ppm(&self, path: &Path) -> Result<(), FrameError> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3 + 20);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height).expect("vec write");
        for &v in &self.pixels {
            out.extend_from_slice(&[v, v, v]);
        }
        fs::write(path, out).map_err(|e| FrameError::io(path, e))
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
}

fn ppm_token<R: BufRead>(r: &mut R) -> Result<String, FrameError> {
    let mut tok = String::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte).map_err(|e| FrameError::io(Path::new("<ppm>"), e))? == 0 {
            return Err(FrameError::MalformedPpm("truncated header"));
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line).map_err(|e| FrameError::io(Path::new("<ppm>"), e))?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
    }
}

/// Decodes a binary P6 image with maxval 255.
pub fn decode_ppm<R: BufRead>(mut r: R) -> Result<Frame, FrameError> {
    if ppm_token(&mut r)? != "P6" {
        return Err(FrameError::MalformedPpm("not a P6 file"));
    }
    let mut num = |what| -> Result<usize, FrameError> {
        ppm_token(&mut r)?.parse().map_err(|_| FrameError::MalformedPpm(what))
    };
    let width = num("bad width")?;
    let height = num("bad height")?;
    if num("bad maxval")? != 255 {
        return Err(FrameError::MalformedPpm("only maxval 255 is supported"));
    }
    let mut rgb = vec![0u8; width * height * 3];
    r.read_exact(&mut rgb).map_err(|_| FrameError::MalformedPpm("truncated pixel data"))?;
    Frame::from_rgb(width, height, &rgb)
}

/// Ordered source of timestamped frames.
pub trait FrameSource {
    /// Presentation times in ms, strictly increasing.
    fn timestamps(&self) -> &[u64];

    fn frame(&self, index: usize) -> Result<Frame, FrameError>;
}

/// Frames held in memory, mostly for tests and synthetic sequences.
#[derive(Debug, Clone, Default)]
pub struct MemoryFrames {
    timestamps: Vec<u64>,
    frames: Vec<Frame>,
}

impl MemoryFrames {
    pub fn new(items: Vec<(u64, Frame)>) -> Self {
        let (timestamps, frames) = items.into_iter().unzip();
        Self { timestamps, frames }
    }
}

impl FrameSource for MemoryFrames {
    fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    fn frame(&self, index: usize) -> Result<Frame, FrameError> {
        self.frames.get(index).cloned().ok_or(FrameError::MissingFrame(index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub frame_rate: f64,
    pub duration_ms: u64,
    pub frames: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub ms: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

/// A directory of PPM frames described by `manifest.json`.
#[derive(Debug, Clone)]
pub struct FrameDir {
    root: PathBuf,
    manifest: Manifest,
    timestamps: Vec<u64>,
}

impl FrameDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, FrameError> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let raw = fs::read(&path).map_err(|e| FrameError::io(&path, e))?;
        let mut manifest: Manifest =
            serde_json::from_slice(&raw).map_err(|e| FrameError::BadManifest(e.to_string()))?;
        manifest.frames.sort_by_key(|e| e.ms);
        if manifest.frames.windows(2).any(|w| w[0].ms == w[1].ms) {
            return Err(FrameError::BadManifest("duplicate frame timestamps".into()));
        }
        let timestamps = manifest.frames.iter().map(|e| e.ms).collect();
        Ok(Self { root, manifest, timestamps })
    }

    /// Writes `frames` (sorted by time) and their manifest into `root`.
    pub fn write(root: &Path, frame_rate: f64, duration_ms: u64, frames: &[(u64, Frame)]) -> Result<Self, FrameError> {
        let mut writer = FrameDirWriter::create(root)?;
        for (ms, frame) in frames {
            writer.push(*ms, frame)?;
        }
        writer.finish(frame_rate, duration_ms)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Frame shown at `ms`: the last frame whose timestamp is not after it.
    pub fn frame_at(&self, ms: u64) -> Result<Frame, FrameError> {
        let i = self.timestamps.partition_point(|&t| t <= ms).saturating_sub(1);
        self.frame(i)
    }
}

/// Incremental [`FrameDir`] writer. The manifest is written last, so a
/// directory without one is an unfinished write.
#[derive(Debug)]
pub struct FrameDirWriter {
    root: PathBuf,
    size: Option<(usize, usize)>,
    entries: Vec<ManifestEntry>,
}

impl FrameDirWriter {
    pub fn create(root: &Path) -> Result<Self, FrameError> {
        fs::create_dir_all(root).map_err(|e| FrameError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), size: None, entries: Vec::new() })
    }

    /// Appends one frame. Timestamps must increase and sizes must match.
    pub fn push(&mut self, ms: u64, frame: &Frame) -> Result<(), FrameError> {
        if self.entries.last().is_some_and(|e| e.ms >= ms) {
            return Err(FrameError::BadManifest(format!("frame at {ms} ms is out of order")));
        }
        match self.size {
            None => self.size = Some((frame.width, frame.height)),
            Some((w, h)) if (w, h) != (frame.width, frame.height) => {
                return Err(FrameError::BadDimensions { width: w, height: h, len: frame.pixels.len() })
            }
            Some(_) => {}
        }
        let index = self.entries.len();
        frame.write_ppm(&self.root.join(frame_file_name(index)))?;
        self.entries.push(ManifestEntry { index, ms });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn finish(self, frame_rate: f64, duration_ms: u64) -> Result<FrameDir, FrameError> {
        let (width, height) = self.size.unwrap_or((0, 0));
        let manifest = Manifest { width, height, frame_rate, duration_ms, frames: self.entries };
        let path = self.root.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomically(&path, &json).map_err(|e| FrameError::io(&path, e))?;
        FrameDir::open(self.root)
    }
}

impl FrameSource for FrameDir {
    fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    fn frame(&self, index: usize) -> Result<Frame, FrameError> {
        let entry = self.manifest.frames.get(index).ok_or(FrameError::MissingFrame(index))?;
        let path = self.root.join(frame_file_name(entry.index));
        if !path.exists() {
            return Err(FrameError::MissingFrame(entry.index));
        }
        Frame::read_ppm(&path)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}
