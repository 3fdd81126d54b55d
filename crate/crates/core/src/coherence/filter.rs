use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::{sandwich, TemporalAmplitude, TwoTimeCoherence};
use crate::error::{invalid, Error, Result};
use crate::fft::FftPair;
use crate::grid::{TimeGrid, GHZ_PS};
use crate::quad::bisect;

/// Below this transmitted fraction a filtered photon counts as lost.
pub const REJECTION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterShape {
    /// Ideal slit in a 4-f stretcher: flat passband, hard edges.
    RectSlit,
    /// Single-mode cavity, Lorentzian power transmission.
    LorentzianCavity,
    /// Grating with Gaussian power transmission.
    GaussianGrating,
}

impl FromStr for FilterShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" | "rect-slit" | "slit" => Ok(Self::RectSlit),
            "lorentzian" | "lorentzian-cavity" | "cavity" => Ok(Self::LorentzianCavity),
            "gaussian" | "gaussian-grating" | "grating" => Ok(Self::GaussianGrating),
            _ => invalid(format!("unknown filter shape `{s}` (rect, lorentzian, gaussian)")),
        }
    }
}

impl fmt::Display for FilterShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RectSlit => "rect",
            Self::LorentzianCavity => "lorentzian",
            Self::GaussianGrating => "gaussian",
        })
    }
}

/// Amplitude transfer function H(nu). `fwhm` is the FWHM of |H|^2 in GHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFilter {
    pub shape: FilterShape,
    pub fwhm: f64,
    pub center_detuning: f64,
}

impl SpectralFilter {
    pub fn new(shape: FilterShape, fwhm: f64) -> Result<Self> {
        if !(fwhm > 0.0) || fwhm.is_nan() {
            return invalid(format!("filter FWHM must be positive, got {fwhm}"));
        }
        Ok(Self { shape, fwhm, center_detuning: 0.0 })
    }

    pub fn rect(fwhm: f64) -> Result<Self> {
        Self::new(FilterShape::RectSlit, fwhm)
    }

    pub fn gaussian(fwhm: f64) -> Result<Self> {
        Self::new(FilterShape::GaussianGrating, fwhm)
    }

    pub fn lorentzian(fwhm: f64) -> Result<Self> {
        Self::new(FilterShape::LorentzianCavity, fwhm)
    }

    pub fn detuned(mut self, detuning: f64) -> Self {
        self.center_detuning = detuning;
        self
    }

    /// H(nu), nu in GHz relative to the photon center.
    pub fn transfer(&self, nu: f64) -> Complex64 {
        let x = nu - self.center_detuning;
        let f = self.fwhm;
        match self.shape {
            FilterShape::RectSlit => {
                let a = x.abs();
                let h = if a < 0.5 * f {
                    1.0
                } else if a == 0.5 * f {
                    0.5
                } else {
                    0.0
                };
                Complex64::new(h, 0.0)
            }
            FilterShape::GaussianGrating => {
                if f.is_infinite() {
                    return Complex64::new(1.0, 0.0);
                }
                Complex64::new((-2.0 * LN_2 * x * x / (f * f)).exp(), 0.0)
            }
            FilterShape::LorentzianCavity => {
                if f.is_infinite() {
                    return Complex64::new(1.0, 0.0);
                }
                let hw = 0.5 * f;
                Complex64::new(hw, 0.0) / Complex64::new(hw, x)
            }
        }
    }

    /// |H(nu)|^2
    pub fn power(&self, nu: f64) -> f64 {
        self.transfer(nu).norm_sqr()
    }

    /// H on the FFT frequencies of `grid`.
    pub(crate) fn transfer_on(&self, grid: &TimeGrid) -> Vec<Complex64> {
        grid.fft_freqs().into_iter().map(|nu| self.transfer(nu)).collect()
    }

    /// Frequency interval outside of which |H|^2 < `floor` (Lorentzian and rect are exact,
    /// the Gaussian is cut where it falls below the floor).
    pub fn support(&self, floor: f64) -> (f64, f64) {
        let f = self.fwhm;
        let hw = match self.shape {
            FilterShape::RectSlit => 0.5 * f,
            FilterShape::GaussianGrating => 0.5 * f * (floor.recip().ln() / LN_2).sqrt(),
            FilterShape::LorentzianCavity => 0.5 * f * (floor.recip() - 1.0).max(0.0).sqrt(),
        };
        (self.center_detuning - hw, self.center_detuning + hw)
    }
}

impl fmt::Display for SpectralFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} GHz", self.shape, self.fwhm)?;
        if self.center_detuning != 0.0 {
            write!(f, " (detuned {} GHz)", self.center_detuning)?;
        }
        Ok(())
    }
}

/// Intensity FWHM (ps) of the transform-limited pulse behind a filter of the given
/// power FWHM (GHz) and shape.
pub fn transform_limit(fwhm: f64, shape: FilterShape) -> Result<f64> {
    if !(fwhm > 0.0) {
        return invalid(format!("bandwidth must be positive, got {fwhm}"));
    }
    let product = match shape {
        FilterShape::GaussianGrating => 2.0 * LN_2 / PI,
        FilterShape::LorentzianCavity => LN_2 / (2.0 * PI),
        FilterShape::RectSlit => {
            // sinc^2(x) = 1/2
            let x = bisect(|x| x.sin() / x - std::f64::consts::FRAC_1_SQRT_2, 1.0, 2.0, 1e-15);
            2.0 * x / PI
        }
    };
    Ok(product / (fwhm * GHZ_PS))
}

/// Time-domain amplitude response h(t) of `filter`, centered on t = 0 (the
/// Lorentzian response starts at t = 0). Unit L2 norm.
pub fn filter_amplitude_response(filter: &SpectralFilter, grid: TimeGrid) -> Result<TemporalAmplitude> {
    let limit = 0.05 / (filter.fwhm * GHZ_PS);
    if grid.dt > limit {
        return Err(Error::Grid(format!(
            "dt={} ps does not resolve a {} GHz filter (needs dt <= {:.3} ps)",
            grid.dt, filter.fwhm, limit
        )));
    }
    let mut h: Vec<Complex64> = grid
        .fft_freqs()
        .into_iter()
        .map(|nu| filter.transfer(nu) * Complex64::from_polar(1.0, 2.0 * PI * nu * grid.t0 * GHZ_PS))
        .collect();
    FftPair::new(grid.n).inverse(&mut h);
    TemporalAmplitude::new(h, grid.t0, grid.dt)
}

/// A filtered state together with the probability that the photon passed.
#[derive(Debug, Clone)]
pub struct Filtered<S> {
    pub state: S,
    pub transmitted_fraction: f64,
}

/// Photon states that can be sent through a spectral filter.
pub trait Filterable: Sized {
    fn filtered(&self, filter: &SpectralFilter) -> Result<Filtered<Self>>;
}

impl Filterable for TemporalAmplitude {
    fn filtered(&self, filter: &SpectralFilter) -> Result<Filtered<Self>> {
        let grid = self.grid();
        let h = filter.transfer_on(&grid);
        let mut s = self.samples().to_vec();
        FftPair::new(grid.n).multiply(&mut s, &h);
        let t = s.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.dt;
        if !(t >= REJECTION_FLOOR) {
            return Err(Error::PhotonRejected(t));
        }
        let state = TemporalAmplitude::new(s, grid.t0, grid.dt)?;
        Ok(Filtered { state, transmitted_fraction: t.min(1.0) })
    }
}

impl Filterable for TwoTimeCoherence {
    fn filtered(&self, filter: &SpectralFilter) -> Result<Filtered<Self>> {
        let grid = self.grid();
        let h = filter.transfer_on(&grid);
        let out = sandwich(self.values(), &h);
        let t = (0..grid.n).map(|i| out[(i, i)].re).sum::<f64>() * grid.dt;
        if !(t >= REJECTION_FLOOR) {
            return Err(Error::PhotonRejected(t));
        }
        Ok(Filtered {
            state: TwoTimeCoherence::from_parts_unchecked(grid, out),
            transmitted_fraction: t.min(1.0),
        })
    }
}

/// Filter a pure or mixed photon; the output is renormalized.
pub fn apply_filter<S: Filterable>(input: &S, filter: &SpectralFilter) -> Result<Filtered<S>> {
    input.filtered(filter)
}

/// Same as [`apply_filter`] for a two-time coherence.
pub fn apply_filter_coherence(
    input: &TwoTimeCoherence,
    filter: &SpectralFilter,
) -> Result<Filtered<TwoTimeCoherence>> {
    input.filtered(filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::qd_coherence;

    #[test]
    fn transform_limits() {
        let g = transform_limit(30.0, FilterShape::GaussianGrating).unwrap();
        assert!((g - 14.709).abs() < 1e-3, "{g}");
        let r = transform_limit(7.7, FilterShape::RectSlit).unwrap();
        assert!((r - 115.051).abs() < 1e-2, "{r}");
        let l = transform_limit(1.0, FilterShape::LorentzianCavity).unwrap();
        assert!((l - 110.318).abs() < 1e-2, "{l}");
        assert!(transform_limit(0.0, FilterShape::RectSlit).is_err());
    }

    #[test]
    fn response_widths() {
        let grid = TimeGrid::new(-1000.0, 0.25, 8000).unwrap();
        let g = filter_amplitude_response(&SpectralFilter::gaussian(30.0).unwrap(), grid).unwrap();
        assert!((g.intensity_fwhm() - 14.709).abs() < 0.01, "{}", g.intensity_fwhm());
        let grid = TimeGrid::new(-4000.0, 2.0, 8000).unwrap();
        let r = filter_amplitude_response(&SpectralFilter::rect(7.7).unwrap(), grid).unwrap();
        assert!((r.intensity_fwhm() - 115.05).abs() < 0.3, "{}", r.intensity_fwhm());
    }

    #[test]
    fn lorentzian_response_is_causal_exponential() {
        let f = 2.0;
        let grid = TimeGrid::new(-500.0, 0.5, 16000).unwrap();
        let h = filter_amplitude_response(&SpectralFilter::lorentzian(f).unwrap(), grid).unwrap();
        let i = h.intensity();
        let idx = |t: f64| ((t - grid.t0) / grid.dt).round() as usize;
        // amplitude decays as exp(-pi f t), intensity as exp(-2 pi f t)
        let tau = 1.0 / (2.0 * PI * f * GHZ_PS);
        let r = i[idx(300.0 + tau)] / i[idx(300.0)];
        assert!((r - (-1.0f64).exp()).abs() < 5e-3, "{r}");
        assert!(i[idx(-200.0)] < 1e-4 * i[idx(10.0)]);
    }

    #[test]
    fn unresolved_grid_rejected() {
        let grid = TimeGrid::new(0.0, 5.0, 1000).unwrap();
        assert!(filter_amplitude_response(&SpectralFilter::gaussian(30.0).unwrap(), grid).is_err());
    }

    #[test]
    fn wide_filter_is_identity() {
        let grid = TimeGrid::new(-200.0, 1.0, 1024).unwrap();
        let psi = TemporalAmplitude::gaussian(20.0, 0.0, grid).unwrap();
        let out = apply_filter(&psi, &SpectralFilter::gaussian(1e9).unwrap()).unwrap();
        assert!((out.transmitted_fraction - 1.0).abs() < 1e-12);
        for (a, b) in out.state.samples().iter().zip(psi.samples()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn detuned_filter_rejects() {
        let grid = TimeGrid::new(-200.0, 1.0, 1024).unwrap();
        let psi = TemporalAmplitude::gaussian(50.0, 0.0, grid).unwrap();
        let f = SpectralFilter::rect(5.0).unwrap().detuned(200.0);
        assert!(matches!(apply_filter(&psi, &f), Err(Error::PhotonRejected(_))));
    }

    #[test]
    fn filtering_keeps_states_valid() {
        let grid = TimeGrid::covering(-400.0, 9.0 * 328.0, 8.0).unwrap();
        let g = qd_coherence(328.0, 216.0, grid).unwrap();
        let out = apply_filter(&g, &SpectralFilter::rect(1.5).unwrap()).unwrap();
        assert!(out.transmitted_fraction > 0.3 && out.transmitted_fraction < 1.0);
        assert!((out.state.trace() - 1.0).abs() < 1e-9);
        let p = out.state.purity();
        assert!(p > g.purity() && p <= 1.0 + 1e-9, "{p}");
    }
}
