//! Kernelized correlation filter with a Gaussian kernel over raw grayscale
//! features.
//!
//! The filter is a kernel ridge regression trained on every cyclic shift of a
//! fixed-size template. Circulant structure makes training and detection
//! elementwise operations in the Fourier domain:
//!
//! * training: `alpha_f = y_f / (k_f^{xx} + lambda)`
//! * detection: `response = ifft(alpha_f * k_f^{xz})`
//!
//! where `k^{xz}` is the Gaussian kernel evaluated between the model template
//! and every cyclic shift of the search patch. Tracking is translation-only:
//! the box keeps the dimensions it was seeded with.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use vidnote_core::BoundingBox;

use crate::error::TrackerError;
use crate::fft::Fft2;
use crate::frame::Frame;

/// Regression-target bandwidth relative to `sqrt(w * h)` of the box in template pixels.
const OUTPUT_SIGMA_FACTOR: f64 = 0.1;

/// Windowed patches with less RMS energy than this, in unit intensity, are treated as featureless.
const MIN_FEATURE_RMS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrackerParams {
    /// Context around the box: the search window is `(1 + padding)` times the box.
    pub padding: f64,
    pub kernel_sigma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub template_size: usize,
    pub confidence_floor: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            padding: 1.5,
            kernel_sigma: 0.5,
            lambda: 1e-4,
            learning_rate: 0.075,
            template_size: 64,
            confidence_floor: 0.2,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let positive = [self.padding, self.kernel_sigma, self.lambda, self.learning_rate, self.confidence_floor];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TrackerError::InvalidParams("all parameters must be positive"));
        }
        if self.learning_rate > 1.0 {
            return Err(TrackerError::InvalidParams("learning rate must not exceed 1"));
        }
        if !self.template_size.is_power_of_two() || self.template_size < 4 {
            return Err(TrackerError::InvalidParams("template size must be a power of two >= 4"));
        }
        Ok(())
    }
}

/// Square `n x n` real-valued patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    n: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "patch must hold n*n values");
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Content moved by `(dx, dy)` with wrap-around: `out(r, c) = self(r - dy, c - dx)`.
    pub fn cyclic_shift(&self, dx: isize, dy: isize) -> Self {
        let n = self.n as isize;
        let mut out = vec![0.0; self.data.len()];
        for r in 0..n {
            for c in 0..n {
                let sr = (r - dy).rem_euclid(n);
                let sc = (c - dx).rem_euclid(n);
                out[(r * n + c) as usize] = self.data[(sr * n + sc) as usize];
            }
        }
        Self::new(self.n, out)
    }

    /// Row, column and value of the maximum.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (i, v) = self
            .data
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        (i / self.n, i % self.n, v)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Separable Hann window.
pub fn cosine_window(n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(w[r] * w[c]);
        }
    }
    out
}

/// Gaussian regression target peaked at zero shift, wrapping around the edges.
pub fn gaussian_target(n: usize, sigma: f64) -> Patch {
    let wrap = |i: usize| {
        let i = i as f64;
        if i > n as f64 / 2.0 {
            i - n as f64
        } else {
            i
        }
    };
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let (dy, dx) = (wrap(r), wrap(c));
            data.push((-0.5 * (dx * dx + dy * dy) / (sigma * sigma)).exp());
        }
    }
    Patch::new(n, data)
}

/// Zero-mean, cosine-windowed, then scaled to unit mean energy.
///
/// Without the scaling, low-contrast patches keep the kernel close to 1 for
/// every shift and the peak response stops reflecting match quality.
/// Featureless patches stay all-zero.
pub fn preprocess(raw: &[f64], window: &[f64]) -> Vec<f64> {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let mut out: Vec<f64> = raw.iter().zip(window).map(|(v, w)| (v - mean) * w).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
    if rms > MIN_FEATURE_RMS {
        out.iter_mut().for_each(|v| *v /= rms);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

fn kernel_from_spectra(
    fft: &Fft2,
    af: &[Complex64],
    bf: &[Complex64],
    aa: f64,
    bb: f64,
    sigma: f64,
) -> Vec<f64> {
    let cross: Vec<Complex64> = af.iter().zip(bf).map(|(a, b)| a.conj() * b).collect();
    let cross = fft.inverse_real(&cross);
    let norm = sigma * sigma * cross.len() as f64;
    cross
        .into_iter()
        .map(|c| (-(aa + bb - 2.0 * c).max(0.0) / norm).exp())
        .collect()
}

fn spectral_energy(xf: &[Complex64]) -> f64 {
    xf.iter().map(|c| c.norm_sqr()).sum::<f64>() / xf.len() as f64
}

/// Dense Gaussian kernel correlation between `a` and every cyclic shift of `b`:
///
/// `k(t) = exp(-(|a|^2 + |b|^2 - 2 sum_p a(p) b(p + t)) / (sigma^2 N))`
///
/// If `b` is `a` with its content moved by `(dx, dy)`, the maximum sits at
/// row `dy`, column `dx` (modulo the patch size).
pub fn gaussian_kernel_response(a: &Patch, b: &Patch, sigma: f64) -> Result<Patch, TrackerError> {
    if a.n != b.n {
        return Err(TrackerError::DimensionMismatch(a.n, b.n));
    }
    let fft = Fft2::new(a.n);
    let k = kernel_from_spectra(&fft, &fft.forward(&a.data), &fft.forward(&b.data), a.energy(), b.energy(), sigma);
    Ok(Patch::new(a.n, k))
}

/// Solves `(K + lambda I) alpha = y` for the dual coefficients over all cyclic
/// shifts of `x`, returning `alpha` in the spatial domain.
pub fn train_dual_coefficients(x: &Patch, target: &Patch, sigma: f64, lambda: f64) -> Result<Patch, TrackerError> {
    if x.n != target.n {
        return Err(TrackerError::DimensionMismatch(x.n, target.n));
    }
    let fft = Fft2::new(x.n);
    let xf = fft.forward(&x.data);
    let alphaf = dual_spectrum(&fft, &xf, &fft.forward(&target.data), sigma, lambda);
    Ok(Patch::new(x.n, fft.inverse_real(&alphaf)))
}

fn dual_spectrum(fft: &Fft2, xf: &[Complex64], yf: &[Complex64], sigma: f64, lambda: f64) -> Vec<Complex64> {
    let xx = spectral_energy(xf);
    let kf = fft.forward(&kernel_from_spectra(fft, xf, xf, xx, xx, sigma));
    yf.iter().zip(&kf).map(|(y, k)| y / (k + lambda)).collect()
}

/// Search-window size in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    width: f64,
    height: f64,
}

impl Window {
    fn scale(&self, n: usize) -> (f64, f64) {
        (self.width / n as f64, self.height / n as f64)
    }
}

/// Learned appearance model and current geometry of one tracked box.
#[derive(Clone)]
pub struct TrackerState {
    params: TrackerParams,
    fft: Fft2,
    window: Window,
    cos_window: Vec<f64>,
    target_f: Vec<Complex64>,
    model_alpha_f: Vec<Complex64>,
    model_x_f: Vec<Complex64>,
    bbox: BoundingBox,
}

impl std::fmt::Debug for TrackerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrackerState")
            .field("params", &self.params)
            .field("window", &self.window)
            .field("bbox", &self.bbox)
            .finish_non_exhaustive()
    }
}

/// Outcome of detecting the target in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Peak of the correlation response.
    pub confidence: f64,
}

impl TrackerState {
    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    /// Spectrum of the learned dual coefficients.
    pub fn model_spectrum(&self) -> &[Complex64] {
        &self.model_alpha_f
    }

    /// Spectrum of the learned appearance template.
    pub fn template_spectrum(&self) -> &[Complex64] {
        &self.model_x_f
    }

    fn features_at(&self, frame: &Frame, center: (f64, f64)) -> Vec<Complex64> {
        let n = self.params.template_size;
        let raw = sample_window(frame, center, self.window, n);
        self.fft.forward(&preprocess(&raw, &self.cos_window))
    }

    fn correlate(&self, zf: &[Complex64]) -> Patch {
        let n = self.params.template_size;
        let k = kernel_from_spectra(
            &self.fft,
            &self.model_x_f,
            zf,
            spectral_energy(&self.model_x_f),
            spectral_energy(zf),
            self.params.kernel_sigma,
        );
        let kf = self.fft.forward(&k);
        let prod: Vec<Complex64> = self.model_alpha_f.iter().zip(&kf).map(|(a, k)| a * k).collect();
        Patch::new(n, self.fft.inverse_real(&prod))
    }

    /// Detects the target near its previous location without updating the model.
    pub fn detect(&self, frame: &Frame) -> Detection {
        let n = self.params.template_size;
        let response = self.correlate(&self.features_at(frame, self.bbox.center()));
        let (row, col, peak) = response.argmax();

        let wrap = |i: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
        let dy = wrap(row) + parabolic_offset(&response, row, col, Axis::Rows);
        let dx = wrap(col) + parabolic_offset(&response, row, col, Axis::Cols);

        let (sx, sy) = self.window.scale(n);
        Detection { bbox: self.bbox.translated(dx * sx, dy * sy), confidence: peak }
    }

    /// Detects in `frame`, moves the box and blends the model learned at the new location.
    pub fn update(&mut self, frame: &Frame) -> Detection {
        let det = self.detect(frame);
        self.bbox = det.bbox;

        let xf = self.features_at(frame, self.bbox.center());
        let alpha_f = dual_spectrum(&self.fft, &xf, &self.target_f, self.params.kernel_sigma, self.params.lambda);
        let lr = self.params.learning_rate;
        blend(&mut self.model_alpha_f, &alpha_f, lr);
        blend(&mut self.model_x_f, &xf, lr);
        det
    }
}

fn blend(model: &mut [Complex64], fresh: &[Complex64], lr: f64) {
    for (m, f) in model.iter_mut().zip(fresh) {
        *m = *m * (1.0 - lr) + f * lr;
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Rows,
    Cols,
}

/// Sub-pixel offset of a peak from a 3-point parabola through its cyclic neighbours.
fn parabolic_offset(resp: &Patch, row: usize, col: usize, axis: Axis) -> f64 {
    let n = resp.n;
    let (prev, next) = match axis {
        Axis::Rows => (resp.at((row + n - 1) % n, col), resp.at((row + 1) % n, col)),
        Axis::Cols => (resp.at(row, (col + n - 1) % n), resp.at(row, (col + 1) % n)),
    };
    let center = resp.at(row, col);
    let denom = prev - 2.0 * center + next;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
}

/// Samples an `n x n` grid covering `window` around `center`, intensities in `[0, 1]`.
/// Template pixels larger than a frame pixel are area-averaged by supersampling.
fn sample_window(frame: &Frame, center: (f64, f64), window: Window, n: usize) -> Vec<f64> {
    let (sx, sy) = window.scale(n);
    let (ssx, ssy) = (sx.ceil().clamp(1.0, 8.0) as usize, sy.ceil().clamp(1.0, 8.0) as usize);
    let half = n as f64 / 2.0;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for j in 0..ssy {
                for i in 0..ssx {
                    let u = center.0 + (c as f64 - half + (i as f64 + 0.5) / ssx as f64) * sx;
                    let v = center.1 + (r as f64 - half + (j as f64 + 0.5) / ssy as f64) * sy;
                    acc += frame.sample(u - 0.5, v - 0.5);
                }
            }
            out.push(acc / (ssx * ssy) as f64 / 255.0);
        }
    }
    out
}

/// Trains a tracker on `bbox` in `frame`.
pub fn kcf_init(frame: &Frame, bbox: BoundingBox, params: TrackerParams) -> Result<TrackerState, TrackerError> {
    params.validate()?;
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    let outside = bbox.x() + bbox.w() <= 0.0 || bbox.y() + bbox.h() <= 0.0 || bbox.x() >= fw || bbox.y() >= fh;
    if outside {
        return Err(TrackerError::SeedOutsideFrame { width: frame.width(), height: frame.height() });
    }

    let n = params.template_size;
    let window = Window { width: bbox.w() * (1.0 + params.padding), height: bbox.h() * (1.0 + params.padding) };
    let (sx, sy) = window.scale(n);
    let output_sigma = (bbox.w() / sx * bbox.h() / sy).sqrt() * OUTPUT_SIGMA_FACTOR;

    let fft = Fft2::new(n);
    let target_f = fft.forward(gaussian_target(n, output_sigma).data());
    let mut state = TrackerState {
        params,
        cos_window: cosine_window(n),
        window,
        target_f,
        model_alpha_f: Vec::new(),
        model_x_f: Vec::new(),
        bbox,
        fft,
    };
    let xf = state.features_at(frame, bbox.center());
    state.model_alpha_f = dual_spectrum(&state.fft, &xf, &state.target_f, params.kernel_sigma, params.lambda);
    state.model_x_f = xf;
    Ok(state)
}

/// One tracking step: returns the updated state, proposed box and confidence.
pub fn kcf_step(mut state: TrackerState, frame: &Frame) -> (TrackerState, BoundingBox, f64) {
    let det = state.update(frame);
    (state, det.bbox, det.confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(n: usize, rng: &mut ChaCha8Rng) -> Patch {
        let raw: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        Patch::new(n, preprocess(&raw, &cosine_window(n)))
    }

    fn square_frame(size: usize, x0: usize, y0: usize, side: usize) -> Frame {
        let mut f = Frame::filled(size, size, 40);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                f.set(x, y, 220);
            }
        }
        f
    }

    #[test]
    fn autocorrelation_peaks_at_zero_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_patch(32, &mut rng);
        let k = gaussian_kernel_response(&a, &a, 0.5).unwrap();
        let (r, c, v) = k.argmax();
        assert_eq!((r, c), (0, 0));
        assert!((v - 1.0).abs() < 1e-12);
        assert!(k.data().iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn shifted_patch_peaks_at_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_patch(32, &mut rng);
        for (dx, dy) in [(3isize, 5isize), (-4, 2), (0, -7), (15, 15)] {
            let b = a.cyclic_shift(dx, dy);
            let (r, c, _) = gaussian_kernel_response(&a, &b, 0.5).unwrap().argmax();
            assert_eq!((r as isize, c as isize), (dy.rem_euclid(32), dx.rem_euclid(32)), "shift ({dx},{dy})");
        }
    }

    #[test]
    fn independent_noise_stays_below_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_patch(16, &mut rng);
            let b = random_patch(16, &mut rng);
            let auto = gaussian_kernel_response(&a, &a, 0.5).unwrap().argmax().2;
            let cross = gaussian_kernel_response(&a, &b, 0.5).unwrap().argmax().2;
            assert!(cross < auto, "{cross} >= {auto}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            gaussian_kernel_response(&Patch::zeros(8), &Patch::zeros(16), 0.5),
            Err(TrackerError::DimensionMismatch(8, 16))
        ));
    }

    #[test]
    fn self_detection_is_a_fixed_point() {
        let f = square_frame(64, 20, 24, 16);
        let seed = BoundingBox::new(20., 24., 16., 16.).unwrap();
        let state = kcf_init(&f, seed, TrackerParams::default()).unwrap();
        let (_, b, conf) = kcf_step(state, &f);
        let (cx, cy) = b.center();
        assert!((cx - 28.0).abs() <= 1.0 && (cy - 32.0).abs() <= 1.0, "{b:?}");
        assert!(conf > 0.9, "confidence {conf}");
        assert_eq!((b.w(), b.h()), (16.0, 16.0));
    }

    #[test]
    fn uniform_frame_yields_low_confidence() {
        let f = Frame::filled(64, 64, 128);
        let params = TrackerParams::default();
        let state = kcf_init(&f, BoundingBox::new(10., 10., 16., 16.).unwrap(), params).unwrap();
        let (_, _, conf) = kcf_step(state, &f);
        assert!(conf < params.confidence_floor, "confidence {conf}");
    }

    #[test]
    fn seed_outside_frame_rejected() {
        let f = Frame::filled(64, 64, 0);
        let b = BoundingBox::new(64., 10., 5., 5.).unwrap();
        assert!(matches!(kcf_init(&f, b, TrackerParams::default()), Err(TrackerError::SeedOutsideFrame { .. })));
        let partially = BoundingBox::new(-4., -4., 5., 5.).unwrap();
        assert!(kcf_init(&f, partially, TrackerParams::default()).is_ok());
    }

    #[test]
    fn params_validation() {
        let mut p = TrackerParams { template_size: 48, ..Default::default() };
        assert!(p.validate().is_err());
        p.template_size = 32;
        assert!(p.validate().is_ok());
        p.lambda = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn parabola_recovers_known_vertex() {
        // Samples of -(x - 0.3)^2 at x = -1, 0, 1.
        let f = |x: f64| -(x - 0.3) * (x - 0.3);
        let mut data = vec![-10.0; 9];
        data[3] = f(-1.0);
        data[4] = f(0.0);
        data[5] = f(1.0);
        let p = Patch::new(3, data);
        assert!((parabolic_offset(&p, 1, 1, Axis::Cols) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn static_square_does_not_drift() {
        let f = square_frame(64, 24, 24, 16);
        let seed = BoundingBox::new(24., 24., 16., 16.).unwrap();
        let mut state = kcf_init(&f, seed, TrackerParams::default()).unwrap();
        for _ in 0..10 {
            state.update(&f);
        }
        let (cx, cy) = state.bbox().center();
        assert!((cx - 32.0).abs() + (cy - 32.0).abs() <= 1.0);
    }
}
