//! Bounding boxes and keyframed box tracks.
//!
//! Coordinates are real-valued native-video pixels with the origin at the
//! top-left corner. Timestamps are integer milliseconds from video start.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Axis-aligned box in native video pixels. Width and height are strictly
/// positive; the position may lie partially or fully outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Deserialize)]
struct RawBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = CoreError;

    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        BoundingBox::new(r.x, r.y, r.w, r.h)
    }
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, CoreError> {
        let finite = [x, y, w, h].iter().all(|v| v.is_finite());
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(CoreError::InvalidBox);
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, CoreError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn components(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        ix.max(0.0) * iy.max(0.0)
    }

    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection_area(other);
        inter / (self.area() + other.area() - inter)
    }

    /// Largest absolute per-component difference.
    pub fn max_component_delta(&self, other: &Self) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Componentwise `self + frac * (other - self)`.
    pub fn lerp(&self, other: &Self, frac: f64) -> Self {
        let l = |a: f64, b: f64| a + frac * (b - a);
        Self {
            x: l(self.x, other.x),
            y: l(self.y, other.y),
            w: l(self.w, other.w),
            h: l(self.h, other.h),
        }
    }
}

/// Closed millisecond interval `[start, end]` that keyframes must fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSpan {
    pub start: u64,
    pub end: u64,
}

impl TimeSpan {
    pub fn new(start: u64, duration: u64) -> Self {
        Self { start, end: start.saturating_add(duration) }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub ts: u64,
    #[serde(flatten)]
    pub bbox: BoundingBox,
}

impl Keyframe {
    pub fn new(ts: u64, bbox: BoundingBox) -> Self {
        Self { ts, bbox }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
}

/// Interpolates a box at `t` over keyframes sorted by timestamp.
///
/// Before the first keyframe and after the last the nearest keyframe's box is
/// returned unchanged.
pub fn interpolate_box(keyframes: &[Keyframe], t: u64) -> Result<BoundingBox, CoreError> {
    let (first, last) = match (keyframes.first(), keyframes.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(CoreError::EmptyTrack),
    };
    if t <= first.ts {
        return Ok(first.bbox);
    }
    if t >= last.ts {
        return Ok(last.bbox);
    }
    // First keyframe strictly after t; both neighbours exist given the clamps above.
    let hi = keyframes.partition_point(|k| k.ts <= t);
    let (k0, k1) = (&keyframes[hi - 1], &keyframes[hi]);
    if k0.ts == t {
        return Ok(k0.bbox);
    }
    let frac = (t - k0.ts) as f64 / (k1.ts - k0.ts) as f64;
    Ok(k0.bbox.lerp(&k1.bbox, frac))
}

/// Keyframes strictly increasing in time, at least one, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrack")]
pub struct BoxTrack {
    interpolation: Interpolation,
    keyframes: Vec<Keyframe>,
}

#[derive(Deserialize)]
struct RawTrack {
    #[serde(default)]
    interpolation: Interpolation,
    keyframes: Vec<Keyframe>,
}

impl TryFrom<RawTrack> for BoxTrack {
    type Error = CoreError;

    fn try_from(r: RawTrack) -> Result<Self, Self::Error> {
        let mut track = Self::new(r.keyframes)?;
        track.interpolation = r.interpolation;
        Ok(track)
    }
}

impl BoxTrack {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self, CoreError> {
        if keyframes.is_empty() {
            return Err(CoreError::EmptyTrack);
        }
        if keyframes.windows(2).any(|w| w[0].ts >= w[1].ts) {
            return Err(CoreError::UnorderedKeyframes);
        }
        Ok(Self { interpolation: Interpolation::Linear, keyframes })
    }

    pub fn single(ts: u64, bbox: BoundingBox) -> Self {
        Self { interpolation: Interpolation::Linear, keyframes: vec![Keyframe::new(ts, bbox)] }
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn first(&self) -> &Keyframe {
        &self.keyframes[0]
    }

    pub fn last(&self) -> &Keyframe {
        self.keyframes.last().expect("track is never empty")
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interpolate(&self, t: u64) -> BoundingBox {
        interpolate_box(&self.keyframes, t).expect("track is never empty")
    }

    /// Returns a copy with the keyframe at `t` set to `bbox`, replacing any
    /// existing keyframe at exactly `t`.
    pub fn with_keyframe(&self, span: TimeSpan, t: u64, bbox: BoundingBox) -> Result<Self, CoreError> {
        if !span.contains(t) {
            return Err(CoreError::OutOfSpan { ts: t, start: span.start, end: span.end });
        }
        let mut keyframes = self.keyframes.clone();
        match keyframes.binary_search_by_key(&t, |k| k.ts) {
            Ok(i) => keyframes[i].bbox = bbox,
            Err(i) => keyframes.insert(i, Keyframe::new(t, bbox)),
        }
        Ok(Self { interpolation: self.interpolation, keyframes })
    }

    /// Returns a copy without the keyframe at `t`; removing the only keyframe fails.
    pub fn without_keyframe(&self, t: u64) -> Result<Self, CoreError> {
        let keyframes: Vec<_> = self.keyframes.iter().copied().filter(|k| k.ts != t).collect();
        Self::new(keyframes)
    }
}
