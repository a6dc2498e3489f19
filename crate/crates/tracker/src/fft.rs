use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square 2-D FFT over row-major `n x n` buffers.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(real.len(), self.n * self.n);
        let mut buf: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &*self.forward);
        buf
    }

    /// Inverse transform, normalized, keeping the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.transform(&mut buf, &*self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        // Rows, then columns via transposition.
        fft.process(buf);
        transpose(buf, n);
        fft.process(buf);
        transpose(buf, n);
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}
