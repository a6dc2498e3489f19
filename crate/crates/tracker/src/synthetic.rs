//! Synthetic moving-square sequences with exact ground truth.
//!
//! The square bounces between the frame margins on each axis, so arbitrarily
//! long sequences stay inside small frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidnote_core::BoundingBox;

use crate::frame::Frame;

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frame_size: usize,
    pub target_size: usize,
    /// Top-left corner in frame 0.
    pub start: (i64, i64),
    /// Pixels per frame.
    pub velocity: (i64, i64),
    pub frames: usize,
    pub frame_period_ms: u64,
    pub background: u8,
    pub foreground: u8,
    /// Uniform integer noise in `[-noise, noise]` added to every pixel.
    pub noise: u8,
    /// Distance kept between the square and the frame edge when bouncing.
    pub margin: i64,
    pub seed: u64,
}

impl Default for SyntheticSequence {
    fn default() -> Self {
        Self {
            frame_size: 64,
            target_size: 16,
            start: (4, 24),
            velocity: (2, 0),
            frames: 30,
            frame_period_ms: 40,
            background: 50,
            foreground: 210,
            noise: 0,
            margin: 4,
            seed: 0,
        }
    }
}

fn bounce(start: i64, travel: i64, lo: i64, hi: i64) -> i64 {
    let span = hi - lo;
    if span <= 0 {
        return lo;
    }
    let phase = (start - lo + travel).rem_euclid(2 * span);
    if phase <= span {
        lo + phase
    } else {
        lo + 2 * span - phase
    }
}

impl SyntheticSequence {
    pub fn timestamp(&self, k: usize) -> u64 {
        k as u64 * self.frame_period_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.frames as u64 * self.frame_period_ms
    }

    pub fn position(&self, k: usize) -> (i64, i64) {
        let lo = self.margin;
        let hi = self.frame_size as i64 - self.target_size as i64 - self.margin;
        let k = k as i64;
        (bounce(self.start.0, self.velocity.0 * k, lo, hi), bounce(self.start.1, self.velocity.1 * k, lo, hi))
    }

    pub fn ground_truth(&self, k: usize) -> BoundingBox {
        let (x, y) = self.position(k);
        let s = self.target_size as f64;
        BoundingBox::new(x as f64, y as f64, s, s).expect("positive size")
    }

    fn rng_for(&self, k: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64))
    }

    /// Frame `k` with the square at `position(k)`.
    pub fn render(&self, k: usize) -> Frame {
        self.render_at(k, Some(self.position(k)))
    }

    /// Frame `k`'s noise with the square at `pos`, or no square at all.
    pub fn render_at(&self, k: usize, pos: Option<(i64, i64)>) -> Frame {
        let n = self.frame_size;
        let mut rng = self.rng_for(k);
        let mut f = Frame::filled(n, n, self.background);
        let t = self.target_size as i64;
        for y in 0..n {
            for x in 0..n {
                let inside = pos.is_some_and(|(px, py)| {
                    let (x, y) = (x as i64, y as i64);
                    x >= px && x < px + t && y >= py && y < py + t
                });
                let base = if inside { self.foreground } else { self.background } as i32;
                let jitter = if self.noise > 0 { rng.gen_range(-(self.noise as i32)..=self.noise as i32) } else { 0 };
                f.set(x, y, (base + jitter).clamp(0, 255) as u8);
            }
        }
        f
    }

    pub fn render_all(&self) -> Vec<(u64, Frame)> {
        (0..self.frames).map(|k| (self.timestamp(k), self.render(k))).collect()
    }
}
