//! Single-photon wavepackets: pure temporal amplitudes, two-time coherence
//! functions for mixed states, and spectral filtering of both.

mod filter;

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::FftPair;
use crate::grid::{fwhm, TimeGrid, GHZ_PS};

pub use filter::{
    apply_filter, apply_filter_coherence, filter_amplitude_response, transform_limit, FilterShape,
    SpectralFilter,
};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Pure wavepacket psi(t) sampled on a uniform grid, unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAmplitude {
    samples: Vec<Complex64>,
    t0: f64,
    dt: f64,
}

impl TemporalAmplitude {
    /// Normalizes `samples`. Fails on zero norm or when the grid is shorter than
    /// eight intensity FWHMs.
    pub fn new(samples: Vec<Complex64>, t0: f64, dt: f64) -> Result<Self> {
        let grid = TimeGrid::new(t0, dt, samples.len())?;
        let norm2: f64 = samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * dt;
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return invalid("wavepacket has zero or non-finite norm");
        }
        let s = 1.0 / norm2.sqrt();
        let samples: Vec<Complex64> = samples.into_iter().map(|c| c * s).collect();
        let out = Self { samples, t0, dt };
        let w = out.intensity_fwhm();
        if grid.span() < 8.0 * w {
            return Err(Error::Grid(format!(
                "grid span {:.1} ps is shorter than 8x the intensity FWHM {:.1} ps",
                grid.span(),
                w
            )));
        }
        Ok(out)
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid.times().into_iter().map(f).collect(), grid.t0, grid.dt)
    }

    /// Spontaneous-emission wavepacket sqrt(1/T1) exp(-(t-onset)/2T1) for t >= onset.
    pub fn exponential(t1: f64, onset: f64, grid: TimeGrid) -> Result<Self> {
        if !(t1 > 0.0) {
            return invalid(format!("T1 must be positive, got {t1}"));
        }
        let samples = (0..grid.n)
            .map(|i| {
                let t = grid.t(i) - onset;
                if t < 0.0 {
                    C0
                } else {
                    Complex64::new((-t / (2.0 * t1)).exp(), 0.0)
                }
            })
            .collect();
        Self::new(samples, grid.t0, grid.dt)
    }

    /// Transform-limited wavepacket of a Lorentzian emission line with the given
    /// intensity FWHM (GHz); lifetime 1/(2 pi linewidth).
    pub fn lorentzian_emitter(linewidth: f64, onset: f64, grid: TimeGrid) -> Result<Self> {
        if !(linewidth > 0.0) {
            return invalid("linewidth must be positive");
        }
        Self::exponential(lifetime_from_linewidth(linewidth), onset, grid)
    }

    /// Flat-phase Gaussian pulse whose intensity FWHM is `fwhm` ps.
    pub fn gaussian(fwhm: f64, center: f64, grid: TimeGrid) -> Result<Self> {
        if !(fwhm > 0.0) {
            return invalid("pulse FWHM must be positive");
        }
        let k = 2.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
        Self::from_fn(grid, |t| Complex64::new((-k * (t - center).powi(2)).exp(), 0.0))
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { t0: self.t0, dt: self.dt, n: self.samples.len() }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// |psi|^2, a probability density per ps.
    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn intensity_fwhm(&self) -> f64 {
        fwhm(&self.intensity(), self.dt)
    }

    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dt).sqrt()
    }

    /// <self|other>
    pub fn inner(&self, other: &TemporalAmplitude) -> Result<Complex64> {
        if !self.grid().compatible(&other.grid()) {
            return Err(Error::Grid("wavepackets live on different grids".into()));
        }
        Ok(self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum::<Complex64>()
            * self.dt)
    }

    /// psi(t - delay), by a spectral phase ramp (circular on the grid).
    pub fn delayed(&self, delay: f64) -> TemporalAmplitude {
        let g = self.grid();
        let h: Vec<Complex64> = g
            .fft_freqs()
            .iter()
            .map(|&nu| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * nu * delay * GHZ_PS))
            .collect();
        let mut s = self.samples.clone();
        FftPair::new(g.n).multiply(&mut s, &h);
        TemporalAmplitude { samples: s, t0: self.t0, dt: self.dt }
    }

    pub fn to_coherence(&self) -> TwoTimeCoherence {
        TwoTimeCoherence::pure(self)
    }
}

/// Radiative lifetime (ps) of a transform-limited Lorentzian line of FWHM `linewidth` GHz.
pub fn lifetime_from_linewidth(linewidth: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * linewidth * GHZ_PS)
}

/// First-order coherence G(t, t') of a possibly mixed single-photon state on a
/// shared time grid. Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeCoherence {
    grid: TimeGrid,
    values: DMatrix<Complex64>,
}

impl TwoTimeCoherence {
    /// Validates and normalizes a raw matrix. The upper triangle is kept and
    /// mirrored so the result is exactly Hermitian.
    pub fn from_matrix(grid: TimeGrid, mut values: DMatrix<Complex64>) -> Result<Self> {
        if values.nrows() != grid.n || values.ncols() != grid.n {
            return Err(Error::Grid("matrix shape does not match grid".into()));
        }
        let scale = values.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for j in 0..grid.n {
            for i in 0..j {
                worst = worst.max((values[(i, j)] - values[(j, i)].conj()).norm());
            }
        }
        if worst > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return invalid(format!("matrix is not Hermitian (max deviation {worst:.3e})"));
        }
        hermitize(&mut values);
        let tr: f64 = (0..grid.n).map(|i| values[(i, i)].re).sum::<f64>() * grid.dt;
        if !(tr > 0.0) {
            return invalid("coherence has non-positive trace");
        }
        values /= Complex64::new(tr, 0.0);
        Ok(Self { grid, values })
    }

    pub fn pure(psi: &TemporalAmplitude) -> Self {
        let s = psi.samples();
        let n = s.len();
        let values = DMatrix::from_fn(n, n, |i, j| s[i] * s[j].conj());
        let mut out = Self { grid: psi.grid(), values };
        hermitize(&mut out.values);
        out.renormalize();
        out
    }

    /// Incoherent mixture sum_k w_k |psi_k><psi_k|; weights are normalized.
    pub fn mixture(parts: &[(f64, &TemporalAmplitude)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return invalid("empty mixture");
        };
        let grid = first.grid();
        let wsum: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| p.0 < 0.0) || !(wsum > 0.0) {
            return invalid("mixture weights must be nonnegative with positive sum");
        }
        let mut values = DMatrix::from_element(grid.n, grid.n, C0);
        for (w, psi) in parts {
            if !psi.grid().compatible(&grid) {
                return Err(Error::Grid("mixture components on different grids".into()));
            }
            let s = psi.samples();
            for j in 0..grid.n {
                for i in 0..grid.n {
                    values[(i, j)] += s[i] * s[j].conj() * (*w / wsum);
                }
            }
        }
        let mut out = Self { grid, values };
        hermitize(&mut out.values);
        out.renormalize();
        Ok(out)
    }

    pub(crate) fn from_parts_unchecked(grid: TimeGrid, values: DMatrix<Complex64>) -> Self {
        let mut out = Self { grid, values };
        hermitize(&mut out.values);
        out.renormalize();
        out
    }

    fn renormalize(&mut self) {
        let tr = self.trace();
        if tr > 0.0 {
            self.values /= Complex64::new(tr, 0.0);
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// The same samples placed on another grid of equal size and step, which
    /// translates the state by `grid.t0 - self.grid().t0` without loss.
    pub fn relabeled(self, grid: TimeGrid) -> Result<Self> {
        if grid.n != self.grid.n || (grid.dt - self.grid.dt).abs() > 1e-12 * grid.dt {
            return Err(Error::Grid("relabeling needs equal size and step".into()));
        }
        Ok(Self { grid, values: self.values })
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[(i, j)]
    }

    /// sum_i G(t_i, t_i) dt
    pub fn trace(&self) -> f64 {
        (0..self.grid.n).map(|i| self.values[(i, i)].re).sum::<f64>() * self.grid.dt
    }

    /// Intensity profile G(t, t), a density per ps.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.n).map(|i| self.values[(i, i)].re).collect()
    }

    /// Tr(G^2) dt^2
    pub fn purity(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dt * self.grid.dt
    }

    /// <phi|G|phi> dt^2, the probability of projecting onto `phi`.
    pub fn expectation(&self, phi: &TemporalAmplitude) -> Result<f64> {
        if !self.grid.compatible(&phi.grid()) {
            return Err(Error::Grid("state and wavepacket on different grids".into()));
        }
        let p = phi.samples();
        let gp = &self.values * nalgebra::DVector::from_column_slice(p);
        let v: Complex64 = p.iter().zip(gp.iter()).map(|(a, b)| a.conj() * b).sum();
        Ok(v.re * self.grid.dt * self.grid.dt)
    }

    /// Smallest and largest eigenvalue of G dt. Dense eigensolve, use on coarse grids.
    pub fn eigen_range(&self) -> (f64, f64) {
        let m = self.values.scale(self.grid.dt);
        let ev = m.symmetric_eigenvalues();
        let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// State delayed by `delay` ps: G(t - d, t' - d). Whole-sample shifts move
    /// entries (zero fill); the remainder is applied as a spectral phase ramp.
    pub fn delayed(&self, delay: f64) -> Result<Self> {
        let n = self.grid.n;
        let k = (delay / self.grid.dt).round();
        let frac = delay - k * self.grid.dt;
        let k = k as i64;
        let mut values = DMatrix::from_element(n, n, C0);
        for j in 0..n {
            let sj = j as i64 - k;
            if sj < 0 || sj >= n as i64 {
                continue;
            }
            for i in 0..n {
                let si = i as i64 - k;
                if si >= 0 && si < n as i64 {
                    values[(i, j)] = self.values[(si as usize, sj as usize)];
                }
            }
        }
        let kept: f64 = (0..n).map(|i| values[(i, i)].re).sum::<f64>() * self.grid.dt;
        if kept < 1.0 - 1e-6 {
            return Err(Error::Grid(format!(
                "delay {delay} ps pushes {:.2e} of the photon off the grid",
                1.0 - kept
            )));
        }
        let mut out = Self { grid: self.grid, values };
        if frac.abs() > 1e-12 * self.grid.dt {
            let h: Vec<Complex64> = self
                .grid
                .fft_freqs()
                .iter()
                .map(|&nu| {
                    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * nu * frac * GHZ_PS)
                })
                .collect();
            out.values = sandwich(&out.values, &h);
        }
        hermitize(&mut out.values);
        out.renormalize();
        Ok(out)
    }

    /// Debug dump: one `t,t',re,im` line per matrix entry.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_ps,tp_ps,re_G,im_G")?;
        for i in 0..self.grid.n {
            for j in 0..self.grid.n {
                let g = self.values[(i, j)];
                writeln!(w, "{},{},{:.9e},{:.9e}", self.grid.t(i), self.grid.t(j), g.re, g.im)?;
            }
        }
        Ok(())
    }
}

/// Tr(G^2) dt^2 of a two-time coherence.
pub fn purity(state: &TwoTimeCoherence) -> f64 {
    state.purity()
}

/// C G C^dagger where C multiplies the spectrum by `h`.
pub(crate) fn sandwich(g: &DMatrix<Complex64>, h: &[Complex64]) -> DMatrix<Complex64> {
    let n = g.nrows();
    let fft = FftPair::new(n);
    let mut x = g.clone();
    fft.multiply_chunks(x.as_mut_slice(), h);
    let mut y = x.adjoint();
    fft.multiply_chunks(y.as_mut_slice(), h);
    y
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(j, j)] = Complex64::new(m[(j, j)].re, 0.0);
    }
}

/// Lifetime-broadened emitter with Markovian pure dephasing:
/// G(t,t') = (1/T1) exp(-(t+t')/2T1) exp(-gamma_d |t-t'|) for t, t' >= 0,
/// gamma_d = 1/T2 - 1/2T1, sampled on the grid. The sampled matrix is a diagonal
/// rescaling of exp(-gamma_d |i-j| dt), which is positive definite, so the
/// discrete state is positive semidefinite and exactly rank one when T2 = 2 T1.
pub fn qd_coherence(t1: f64, t2: f64, grid: TimeGrid) -> Result<TwoTimeCoherence> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return invalid(format!("T1 and T2 must be positive (T1={t1}, T2={t2})"));
    }
    if t2 > 2.0 * t1 * (1.0 + 1e-12) {
        return invalid(format!("T2={t2} ps exceeds 2*T1={} ps", 2.0 * t1));
    }
    let t2 = t2.min(2.0 * t1);
    if grid.t0 - 0.5 * grid.dt > 0.0 {
        return Err(Error::Grid("grid must include the emission onset t=0".into()));
    }
    if grid.end() < 8.0 * t1 {
        return Err(Error::Grid(format!(
            "grid ends at {:.1} ps, needs at least 8*T1 = {:.1} ps",
            grid.end(),
            8.0 * t1
        )));
    }
    let n = grid.n;
    let gamma_d = 1.0 / t2 - 0.5 / t1;
    let amp: Vec<f64> = (0..n)
        .map(|i| {
            let t = grid.t(i);
            if t < 0.0 {
                0.0
            } else {
                (-t / (2.0 * t1)).exp() / t1.sqrt()
            }
        })
        .collect();
    let lag: Vec<f64> = (0..n).map(|k| (-gamma_d * k as f64 * grid.dt).exp()).collect();
    let values = DMatrix::from_fn(n, n, |i, j| Complex64::new(amp[i] * amp[j] * lag[i.abs_diff(j)], 0.0));
    Ok(TwoTimeCoherence::from_parts_unchecked(grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t1: f64, dt: f64, span: f64) -> TimeGrid {
        TimeGrid::covering(0.0, span * t1, dt).unwrap()
    }

    #[test]
    fn pure_limit_is_rank_one() {
        let g = qd_coherence(328.0, 656.0, grid(328.0, 4.0, 12.0)).unwrap();
        assert!((g.purity() - 1.0).abs() < 1e-6, "{}", g.purity());
        let psi = TemporalAmplitude::exponential(328.0, 0.0, g.grid()).unwrap();
        let p = g.expectation(&psi).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn dephased_purity_matches_closed_form() {
        let g = qd_coherence(328.0, 216.0, grid(328.0, 2.0, 12.0)).unwrap();
        assert!((g.purity() - 216.0 / 656.0).abs() < 1e-4, "{}", g.purity());
        assert!((g.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_decays_with_t1() {
        let g = qd_coherence(328.0, 216.0, grid(328.0, 2.0, 10.0)).unwrap();
        let d = g.diagonal();
        let i0 = 50;
        let i1 = i0 + 164; // 328 ps later
        let r = d[i1] / d[i0];
        assert!((r - (-1.0f64).exp()).abs() < 1e-9, "{r}");
    }

    #[test]
    fn rejects_unphysical_and_short_grids() {
        assert!(qd_coherence(328.0, 700.0, grid(328.0, 4.0, 12.0)).is_err());
        assert!(qd_coherence(328.0, 216.0, grid(328.0, 4.0, 5.0)).is_err());
        let late = TimeGrid::new(100.0, 4.0, 2000).unwrap();
        assert!(qd_coherence(328.0, 216.0, late).is_err());
    }

    #[test]
    fn psd_on_coarse_grid() {
        let g = qd_coherence(328.0, 150.0, TimeGrid::covering(-40.0, 9.0 * 328.0, 20.0).unwrap())
            .unwrap();
        let (lo, hi) = g.eigen_range();
        assert!(lo >= -1e-8 * hi, "{lo} {hi}");
    }

    #[test]
    fn strong_dephasing_does_not_overflow() {
        let g = qd_coherence(200.0, 5.0, TimeGrid::covering(0.0, 1800.0, 1.0).unwrap()).unwrap();
        assert!(g.values().iter().all(|c| c.re.is_finite()));
        assert!((g.purity() - 5.0 / 400.0).abs() < 1e-3, "{}", g.purity());
    }

    #[test]
    fn mixture_of_orthogonal_packets_has_half_purity() {
        let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
        let a = TemporalAmplitude::gaussian(10.0, 100.0, grid).unwrap();
        let b = TemporalAmplitude::gaussian(10.0, 300.0, grid).unwrap();
        let m = TwoTimeCoherence::mixture(&[(1.0, &a), (1.0, &b)]).unwrap();
        assert!((m.purity() - 0.5).abs() < 1e-9);
        assert!((a.to_coherence().purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_delay_moves_the_centroid() {
        let grid = TimeGrid::new(0.0, 2.0, 512).unwrap();
        let a = TemporalAmplitude::gaussian(40.0, 300.0, grid).unwrap();
        let g = a.to_coherence().delayed(37.0).unwrap();
        let d = g.diagonal();
        let c: f64 = d.iter().enumerate().map(|(i, v)| grid.t(i) * v).sum::<f64>() * 2.0;
        assert!((c - 337.0).abs() < 1e-6, "{c}");
        let p = g.expectation(&a.delayed(37.0)).unwrap();
        assert!((p - 1.0).abs() < 1e-9);
    }
}
