//! Small FFT helpers on top of rustfft.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(crate) struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    pub(crate) fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n), n }
    }

    pub(crate) fn forward(&self, x: &mut [Complex64]) {
        self.fwd.process(x);
    }

    /// Inverse transform including the 1/n factor.
    pub(crate) fn inverse(&self, x: &mut [Complex64]) {
        self.inv.process(x);
        let s = 1.0 / self.n as f64;
        x.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiply the spectrum of `x` by `h` (FFT order), in place.
    pub(crate) fn multiply(&self, x: &mut [Complex64], h: &[Complex64]) {
        self.forward(x);
        x.iter_mut().zip(h).for_each(|(a, b)| *a *= b);
        self.inverse(x);
    }

    /// Apply `multiply` to every contiguous length-n chunk in parallel.
    pub(crate) fn multiply_chunks(&self, data: &mut [Complex64], h: &[Complex64]) {
        data.par_chunks_mut(self.n).for_each(|c| self.multiply(c, h));
    }
}

/// Linear convolution of two real sequences by direct summation; output length
/// `a.len() + b.len() - 1`.
pub(crate) fn convolve_real(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    if a.len() * b.len() < 1 << 16 {
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = (a.len() + b.len() - 1).next_power_of_two();
    let f = FftPair::new(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    f.forward(&mut fa);
    f.forward(&mut fb);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    f.inverse(&mut fa);
    for (o, v) in out.iter_mut().zip(&fa) {
        *o = v.re;
    }
    out
}
