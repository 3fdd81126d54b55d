//! Uniform sampling grids. Times are in ps, frequencies in GHz.

use crate::error::{Error, Result};

/// GHz * ps.
pub const GHZ_PS: f64 = 1e-3;

/// Uniform time grid `t_i = t0 + i*dt`, `i < n`. Each sample represents the cell
/// `[t_i - dt/2, t_i + dt/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::Grid(format!("dt must be positive and finite, got {dt}")));
        }
        if n < 2 {
            return Err(Error::Grid(format!("need at least 2 samples, got {n}")));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid covering `[start, end]` with step `dt`.
    pub fn covering(start: f64, end: f64, dt: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::Grid(format!("empty range [{start}, {end}]")));
        }
        let n = ((end - start) / dt).ceil() as usize + 1;
        Self::new(start, dt, n)
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.t(i)).collect()
    }

    pub fn span(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Upper edge of the last cell.
    pub fn end(&self) -> f64 {
        self.t0 + (self.n as f64 - 0.5) * self.dt
    }

    /// Frequencies (GHz) in FFT order for this grid.
    pub fn fft_freqs(&self) -> Vec<f64> {
        let df = 1.0 / (self.n as f64 * self.dt * GHZ_PS);
        (0..self.n)
            .map(|k| {
                let k = if k < self.n.div_ceil(2) { k as f64 } else { k as f64 - self.n as f64 };
                k * df
            })
            .collect()
    }

    pub fn compatible(&self, other: &TimeGrid) -> bool {
        self.n == other.n
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt.max(1.0)
    }
}

/// Uniform frequency grid `nu_k = start + k*step` (GHz detuning).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl FreqGrid {
    pub fn new(start: f64, step: f64, n: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || n < 2 {
            return Err(Error::Grid(format!("bad frequency grid step={step} n={n}")));
        }
        Ok(Self { start, step, n })
    }

    /// Grid symmetric around zero, `[-half_span, half_span]`, containing 0 as a sample.
    pub fn symmetric(half_span: f64, step: f64) -> Result<Self> {
        let m = (half_span / step).round() as usize;
        Self::new(-(m as f64) * step, step, 2 * m + 1)
    }

    #[inline]
    pub fn nu(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.nu(k)).collect()
    }

    pub fn span(&self) -> f64 {
        self.n as f64 * self.step
    }

    pub fn same_as(&self, other: &FreqGrid) -> bool {
        self.n == other.n
            && (self.step - other.step).abs() <= 1e-12 * self.step
            && (self.start - other.start).abs() <= 1e-9 * self.step
    }
}

/// Full width at half maximum of sampled nonnegative data, outermost crossings,
/// linearly interpolated. Returns 0 for empty or all-zero input.
pub fn fwhm(values: &[f64], step: f64) -> f64 {
    let Some((imax, &m)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
    else {
        return 0.0;
    };
    if !(m > 0.0) {
        return 0.0;
    }
    let h = 0.5 * m;
    let first = values.iter().position(|&v| v >= h).unwrap_or(imax);
    let last = values.iter().rposition(|&v| v >= h).unwrap_or(imax);
    let left = if first == 0 {
        0.0
    } else {
        let (a, b) = (values[first - 1], values[first]);
        first as f64 - (b - h) / (b - a)
    };
    let right = if last + 1 >= values.len() {
        last as f64
    } else {
        let (a, b) = (values[last], values[last + 1]);
        last as f64 + (a - h) / (a - b)
    };
    (right - left) * step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_freqs_layout() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let f = g.fft_freqs();
        assert_eq!(f, vec![0.0, 250.0, -500.0, -250.0]);
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        assert_eq!(g.fft_freqs()[2], 400.0);
        assert_eq!(g.fft_freqs()[3], -400.0);
    }

    #[test]
    fn fwhm_of_triangle() {
        let v: Vec<f64> = (0..21).map(|i| 10.0 - (i as f64 - 10.0).abs()).collect();
        assert!((fwhm(&v, 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_grid_contains_zero() {
        let g = FreqGrid::symmetric(800.0, 2.5).unwrap();
        assert_eq!(g.n, 641);
        assert_eq!(g.nu(320), 0.0);
    }
}
