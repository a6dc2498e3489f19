//! Video decoding into frame directories, probing and thumbnails.
//!
//! Without a configured decoder command only YUV4MPEG2 (`.y4m`) input is
//! understood; its luma plane becomes the grayscale frame.

use std::fs;
use std::io::{self, BufRead, BufReader, Cursor, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use image::imageops::FilterType;
use image::{GrayImage, ImageFormat};

use vidnote_tracker::synthetic::SyntheticSequence;
use vidnote_tracker::{Frame, FrameDir, FrameDirWriter, FrameSource};

use crate::error::ApiError;

pub const THUMBNAIL_WIDTH: u32 = 320;

/// Probed properties of a decoded video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub duration_ms: u64,
    pub frame_rate: f64,
    pub width: u32,
    pub height: u32,
}

impl Probe {
    pub fn of(dir: &FrameDir) -> Result<Self, ApiError> {
        let m = dir.manifest();
        if m.frames.is_empty() || m.width == 0 || m.height == 0 || m.duration_ms == 0 {
            return Err(ApiError::ProbeFailed("decoder produced no frames".into()));
        }
        Ok(Self { duration_ms: m.duration_ms, frame_rate: m.frame_rate, width: m.width as u32, height: m.height as u32 })
    }
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError::ProbeFailed(msg.into())
}

struct Y4mHeader {
    width: usize,
    height: usize,
    rate: (u64, u64),
    chroma_len: usize,
}

fn parse_y4m_header(line: &str) -> Result<Y4mHeader, ApiError> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(bad("not a YUV4MPEG2 stream"));
    }
    let (mut width, mut height, mut rate, mut colorspace) = (0usize, 0usize, (25u64, 1u64), "420jpeg");
    for tok in tokens {
        let (tag, value) = tok.split_at(1);
        match tag {
            "W" => width = value.parse().map_err(|_| bad("bad width"))?,
            "H" => height = value.parse().map_err(|_| bad("bad height"))?,
            "F" => {
                let (n, d) = value.split_once(':').ok_or_else(|| bad("bad frame rate"))?;
                rate = (n.parse().map_err(|_| bad("bad frame rate"))?, d.parse().map_err(|_| bad("bad frame rate"))?);
            }
            "C" => colorspace = value,
            _ => {}
        }
    }
    if width == 0 || height == 0 || rate.0 == 0 || rate.1 == 0 {
        return Err(bad("missing dimensions or frame rate"));
    }
    let (cw, ch) = (width.div_ceil(2), height.div_ceil(2));
    let chroma_len = match colorspace {
        "420jpeg" | "420paldv" | "420mpeg2" | "420" => 2 * cw * ch,
        "422" => 2 * cw * height,
        "444" => 2 * width * height,
        "444alpha" => 3 * width * height,
        "mono" => 0,
        other => return Err(bad(format!("unsupported colorspace {other}"))),
    };
    Ok(Y4mHeader { width, height, rate, chroma_len })
}

/// Decodes a Y4M stream into a frame directory at `out`.
pub fn decode_y4m(input: impl Read, out: &Path) -> Result<FrameDir, ApiError> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
    let header = parse_y4m_header(line.trim_end())?;
    let (num, den) = header.rate;
    let luma_len = header.width * header.height;
    let mut writer = FrameDirWriter::create(out).map_err(ApiError::internal)?;
    let mut chroma = vec![0u8; header.chroma_len];
    let mut count = 0u64;
    let mut last_ms = None;
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(bad("expected FRAME marker"));
        }
        let mut luma = vec![0u8; luma_len];
        r.read_exact(&mut luma).map_err(|_| bad("truncated frame"))?;
        r.read_exact(&mut chroma).map_err(|_| bad("truncated frame"))?;
        let ms = (count * 1000 * den + num / 2) / num;
        count += 1;
        if last_ms.is_some_and(|l| ms <= l) {
            continue;
        }
        last_ms = Some(ms);
        let frame = Frame::new(header.width, header.height, luma).map_err(ApiError::internal)?;
        writer.push(ms, &frame).map_err(ApiError::internal)?;
    }
    if writer.is_empty() {
        return Err(bad("stream has no frames"));
    }
    let duration_ms = (count * 1000 * den + num / 2) / num;
    writer.finish(num as f64 / den as f64, duration_ms).map_err(ApiError::internal)
}

/// Writes grayscale frames as a `C420jpeg` Y4M stream with neutral chroma.
pub fn write_y4m(mut w: impl Write, rate: (u32, u32), frames: &[Frame]) -> io::Result<()> {
    let (width, height) = frames.first().map_or((0, 0), |f| (f.width(), f.height()));
    writeln!(w, "YUV4MPEG2 W{width} H{height} F{}:{} Ip A1:1 C420jpeg", rate.0, rate.1)?;
    let chroma = vec![128u8; 2 * width.div_ceil(2) * height.div_ceil(2)];
    for f in frames {
        w.write_all(b"FRAME\n")?;
        w.write_all(f.pixels())?;
        w.write_all(&chroma)?;
    }
    w.flush()
}

/// Renders `seq` into a Y4M file; frame period must divide one second evenly
/// for timestamps to survive the round trip exactly.
pub fn write_synthetic_y4m(seq: &SyntheticSequence, path: &Path) -> io::Result<()> {
    let frames: Vec<Frame> = seq.render_all().into_iter().map(|(_, f)| f).collect();
    let file = fs::File::create(path)?;
    write_y4m(io::BufWriter::new(file), (1000, seq.frame_period_ms.max(1) as u32), &frames)
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

/// Decodes `input` into `out` with the configured command template, or with
/// the built-in Y4M reader when none is configured.
///
/// A template mentioning `{output}` must leave a frame directory there. Any
/// other template must write a Y4M stream to stdout.
pub fn decode_video(input: &Path, out: &Path, decoder_cmd: Option<&str>) -> Result<FrameDir, ApiError> {
    let Some(template) = decoder_cmd else {
        let file = fs::File::open(input).map_err(ApiError::internal)?;
        return decode_y4m(file, out);
    };
    let cmd = template.replace("{input}", &shell_quote(input)).replace("{output}", &shell_quote(out));
    if !template.contains("{output}") {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| bad(format!("decoder: {e}")))?;
        let stderr = child.stderr.take().expect("piped stderr");
        let drain = std::thread::spawn(move || {
            let mut text = String::new();
            let _ = BufReader::new(stderr).read_to_string(&mut text);
            text
        });
        let decoded = decode_y4m(child.stdout.take().expect("piped stdout"), out);
        let status = child.wait().map_err(|e| bad(format!("decoder: {e}")))?;
        let stderr = drain.join().unwrap_or_default();
        if !status.success() {
            return Err(bad(format!("decoder exited with {status}: {}", stderr.trim())));
        }
        return decoded;
    }
    fs::create_dir_all(out).map_err(ApiError::internal)?;
    let output = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| bad(format!("decoder: {e}")))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(bad(format!("decoder exited with {}: {}", output.status, stderr.trim())));
    }
    FrameDir::open(out).map_err(|e| bad(e.to_string()))
}

/// PNG of the first frame at or after 10% of the duration, scaled to
/// [`THUMBNAIL_WIDTH`] pixels wide.
pub fn thumbnail_png(dir: &FrameDir) -> Result<Vec<u8>, ApiError> {
    let probe = Probe::of(dir)?;
    let at = probe.duration_ms / 10;
    let ts = dir.timestamps();
    let index = ts.partition_point(|&t| t < at).min(ts.len() - 1);
    let frame = dir.frame(index).map_err(|e| bad(e.to_string()))?;
    let img = GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.pixels().to_vec())
        .ok_or_else(|| ApiError::internal("frame buffer size mismatch"))?;
    let height = ((probe.height as f64 * THUMBNAIL_WIDTH as f64 / probe.width as f64).round() as u32).max(1);
    let scaled = image::imageops::resize(&img, THUMBNAIL_WIDTH, height, FilterType::Triangle);
    let mut png = Cursor::new(Vec::new());
    scaled.write_to(&mut png, ImageFormat::Png).map_err(ApiError::internal)?;
    Ok(png.into_inner())
}
