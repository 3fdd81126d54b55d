//! Pulsed type-II down-conversion: joint spectral amplitude, marginals, heralded
//! signal states, Schmidt purity and heralding efficiency under filtering.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coherence::{SpectralFilter, TwoTimeCoherence};
use crate::error::{invalid, Error, Result};
use crate::grid::{fwhm, FreqGrid, TimeGrid, GHZ_PS};
use crate::quad::bisect;

/// Largest fraction of the two-photon norm a frequency grid may cut off.
///
/// The sinc phase-matching tails fall off as 1/nu^2, so the clipped norm only
/// decreases as 1/span; a few percent is what practical grids achieve.
pub const MAX_CLIPPED_NORM: f64 = 3e-2;

/// Pump intensity FWHM in GHz for a transform-limited Gaussian pulse of `tau` ps.
pub fn pump_bandwidth(tau: f64) -> f64 {
    2.0 * LN_2 / PI / (tau * GHZ_PS)
}

/// Orientation of the phase-matching ridge relative to the energy-conservation
/// ridge nu_s + nu_i = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmBranch {
    /// Both group-velocity mismatches have the same sign: z ~ nu_s + a * nu_i.
    SameSign,
    /// Opposite signs: z ~ nu_s - a * nu_i. a = 1 gives identical marginals.
    OppositeSign,
}

impl FromStr for PmBranch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" | "same-sign" => Ok(Self::SameSign),
            "opposite" | "opposite-sign" => Ok(Self::OppositeSign),
            _ => invalid(format!("unknown phase-matching branch `{s}`")),
        }
    }
}

/// Phenomenological phase matching phi = sinc(z) with
/// z = 4 x_h (nu_s +/- a nu_i) / ((1 + a) B), where sinc^2(x_h) = 1/2. Along the
/// coordinate xi = 2 (nu_s +/- a nu_i) / (1 + a), which reduces to the sum (or
/// difference) frequency for a = 1, |phi|^2 has FWHM B = `pm_bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasematchParams {
    pub pm_bandwidth: f64,
    pub asymmetry: f64,
    pub branch: PmBranch,
    /// nm
    pub signal_center: f64,
    /// nm
    pub idler_center: f64,
}

impl Default for PhasematchParams {
    /// Fitted to the measured marginal widths and signal-idler dip visibility.
    fn default() -> Self {
        Self {
            pm_bandwidth: 54.2,
            asymmetry: 0.5,
            branch: PmBranch::SameSign,
            signal_center: 920.0,
            idler_center: 920.0,
        }
    }
}

impl PhasematchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pm_bandwidth > 0.0) || !self.pm_bandwidth.is_finite() {
            return invalid(format!("pm_bandwidth must be positive, got {}", self.pm_bandwidth));
        }
        if !(self.asymmetry > 0.0) || !self.asymmetry.is_finite() {
            return invalid(format!("asymmetry must be positive, got {}", self.asymmetry));
        }
        if self.branch == PmBranch::SameSign && (self.asymmetry - 1.0).abs() < 1e-9 {
            return invalid(
                "asymmetry 1 on the same-sign branch aligns phase matching with energy \
                 conservation; marginals are unbounded",
            );
        }
        if !(self.signal_center > 0.0 && self.idler_center > 0.0) {
            return invalid("center wavelengths must be positive");
        }
        Ok(())
    }

    /// True when both centers sit in the 918-922 nm band used with the dot.
    pub fn in_dot_band(&self) -> bool {
        let ok = |x: f64| x > 918.0 && x < 922.0;
        ok(self.signal_center) && ok(self.idler_center)
    }

    fn coefficients(&self) -> (f64, f64) {
        let xh = sinc_half_point();
        let c = 4.0 * xh / ((1.0 + self.asymmetry) * self.pm_bandwidth);
        let ci = match self.branch {
            PmBranch::SameSign => c * self.asymmetry,
            PmBranch::OppositeSign => -c * self.asymmetry,
        };
        (c, ci)
    }

    #[inline]
    fn phi(&self, cs: f64, ci: f64, ns: f64, ni: f64) -> f64 {
        sinc(cs * ns + ci * ni)
    }
}

fn sinc_half_point() -> f64 {
    bisect(|x| x.sin() / x - std::f64::consts::FRAC_1_SQRT_2, 1.0, 2.0, 1e-15)
}

#[inline]
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Model {
    Analytic { pump_bw: f64, cs: f64, ci: f64 },
    Sampled,
}

/// Discretized f(nu_s, nu_i); rows index the signal grid, columns the idler grid.
#[derive(Debug, Clone)]
pub struct JointSpectralAmplitude {
    pub signal_grid: FreqGrid,
    pub idler_grid: FreqGrid,
    values: DMatrix<Complex64>,
    pub pump_fwhm_time: f64,
    pub phasematch: Option<PhasematchParams>,
    model: Model,
    scale: f64,
}

/// f = alpha(nu_s + nu_i) phi(nu_s, nu_i) for a Gaussian pump of intensity FWHM
/// `pump_fwhm_time` ps (infinite for CW), normalized on the grid.
pub fn build_jsa(
    pump_fwhm_time: f64,
    pm: PhasematchParams,
    signal_grid: FreqGrid,
    idler_grid: FreqGrid,
) -> Result<JointSpectralAmplitude> {
    pm.validate()?;
    if !(pump_fwhm_time > 0.0) {
        return invalid(format!("pump duration must be positive, got {pump_fwhm_time}"));
    }
    let pump_bw = if pump_fwhm_time.is_infinite() { 0.0 } else { pump_bandwidth(pump_fwhm_time) };
    let (cs, ci) = pm.coefficients();
    let tol = 0.5 * signal_grid.step.min(idler_grid.step);
    let eval = |ns: f64, ni: f64| -> f64 {
        let u = ns + ni;
        let a = if pump_bw > 0.0 {
            (-2.0 * LN_2 * u * u / (pump_bw * pump_bw)).exp()
        } else if u.abs() <= tol {
            1.0
        } else {
            0.0
        };
        a * pm.phi(cs, ci, ns, ni)
    };
    let raw = DMatrix::from_fn(signal_grid.n, idler_grid.n, |r, c| {
        Complex64::new(eval(signal_grid.nu(r), idler_grid.nu(c)), 0.0)
    });
    let cell = signal_grid.step * idler_grid.step;
    let sum: f64 = raw.iter().map(|c| c.norm_sqr()).sum::<f64>() * cell;
    if !(sum > 0.0) {
        return Err(Error::Grid("joint spectrum vanishes on the grid".into()));
    }
    let clipped = if pump_bw >= 2.0 * signal_grid.step.max(idler_grid.step) {
        let det = match pm.branch {
            PmBranch::SameSign => (pm.asymmetry - 1.0).abs(),
            PmBranch::OppositeSign => 1.0 + pm.asymmetry,
        } * cs;
        let total = pump_bw * (PI / (4.0 * LN_2)).sqrt() * PI / det;
        1.0 - sum / total
    } else {
        let wide = |g: &FreqGrid| {
            let m = g.n as f64;
            FreqGrid::new(g.start - m * g.step, g.step, 3 * g.n).unwrap()
        };
        let (ws, wi) = (wide(&signal_grid), wide(&idler_grid));
        let mut big = 0.0;
        for r in 0..ws.n {
            for c in 0..wi.n {
                big += eval(ws.nu(r), wi.nu(c)).powi(2);
            }
        }
        1.0 - sum / (big * cell)
    };
    if clipped > MAX_CLIPPED_NORM {
        return Err(Error::Grid(format!(
            "frequency grid clips {:.2}% of the two-photon norm (limit {:.0}%); widen it",
            100.0 * clipped,
            100.0 * MAX_CLIPPED_NORM
        )));
    }
    let scale = 1.0 / sum.sqrt();
    Ok(JointSpectralAmplitude {
        signal_grid,
        idler_grid,
        values: raw * Complex64::new(scale, 0.0),
        pump_fwhm_time,
        phasematch: Some(pm),
        model: Model::Analytic { pump_bw, cs, ci },
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

/// Normalized single-arm spectrum.
#[derive(Debug, Clone)]
pub struct Marginal {
    pub freqs: Vec<f64>,
    /// Unit area over `freqs`.
    pub intensity: Vec<f64>,
    pub fwhm: f64,
}

impl JointSpectralAmplitude {
    /// Wrap an arbitrary sampled amplitude; it is normalized here. Off-grid values
    /// are bilinearly interpolated.
    pub fn from_matrix(
        signal_grid: FreqGrid,
        idler_grid: FreqGrid,
        values: DMatrix<Complex64>,
    ) -> Result<Self> {
        if values.nrows() != signal_grid.n || values.ncols() != idler_grid.n {
            return Err(Error::Grid("matrix shape does not match frequency grids".into()));
        }
        let sum: f64 =
            values.iter().map(|c| c.norm_sqr()).sum::<f64>() * signal_grid.step * idler_grid.step;
        if !(sum > 0.0) || !sum.is_finite() {
            return invalid("joint amplitude has zero or non-finite norm");
        }
        let scale = 1.0 / sum.sqrt();
        Ok(Self {
            signal_grid,
            idler_grid,
            values: values * Complex64::new(scale, 0.0),
            pump_fwhm_time: f64::NAN,
            phasematch: None,
            model: Model::Sampled,
            scale,
        })
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    /// sum |f|^2 dnu_s dnu_i
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>()
            * self.signal_grid.step
            * self.idler_grid.step
    }

    /// f at an arbitrary point, zero outside the grid.
    pub fn amplitude_at(&self, ns: f64, ni: f64) -> Complex64 {
        match self.model {
            Model::Analytic { pump_bw, cs, ci } => {
                let pm = self.phasematch.expect("analytic model has parameters");
                let u = ns + ni;
                let a = if pump_bw > 0.0 {
                    (-2.0 * LN_2 * u * u / (pump_bw * pump_bw)).exp()
                } else if u.abs() <= 0.5 * self.signal_grid.step.min(self.idler_grid.step) {
                    1.0
                } else {
                    0.0
                };
                Complex64::new(self.scale * a * pm.phi(cs, ci, ns, ni), 0.0)
            }
            Model::Sampled => {
                let (gs, gi) = (&self.signal_grid, &self.idler_grid);
                let x = (ns - gs.start) / gs.step;
                let y = (ni - gi.start) / gi.step;
                if x < 0.0 || y < 0.0 || x > (gs.n - 1) as f64 || y > (gi.n - 1) as f64 {
                    return Complex64::new(0.0, 0.0);
                }
                let (x0, y0) = (x.floor() as usize, y.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(gs.n - 1), (y0 + 1).min(gi.n - 1));
                let (fx, fy) = (x - x0 as f64, y - y0 as f64);
                let v = &self.values;
                v[(x0, y0)] * ((1.0 - fx) * (1.0 - fy))
                    + v[(x1, y0)] * (fx * (1.0 - fy))
                    + v[(x0, y1)] * ((1.0 - fx) * fy)
                    + v[(x1, y1)] * (fx * fy)
            }
        }
    }

    /// Weighted Pearson correlation of (nu_s, nu_i) under |f|^2.
    pub fn frequency_correlation(&self) -> f64 {
        let (mut w, mut ms, mut mi) = (0.0, 0.0, 0.0);
        for r in 0..self.signal_grid.n {
            for c in 0..self.idler_grid.n {
                let p = self.values[(r, c)].norm_sqr();
                w += p;
                ms += p * self.signal_grid.nu(r);
                mi += p * self.idler_grid.nu(c);
            }
        }
        ms /= w;
        mi /= w;
        let (mut vs, mut vi, mut cv) = (0.0, 0.0, 0.0);
        for r in 0..self.signal_grid.n {
            for c in 0..self.idler_grid.n {
                let p = self.values[(r, c)].norm_sqr() / w;
                let (a, b) = (self.signal_grid.nu(r) - ms, self.idler_grid.nu(c) - mi);
                vs += p * a * a;
                vi += p * b * b;
                cv += p * a * b;
            }
        }
        cv / (vs * vi).sqrt()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nu_s_GHz,nu_i_GHz,abs_f_sq")?;
        for r in 0..self.signal_grid.n {
            for c in 0..self.idler_grid.n {
                writeln!(
                    w,
                    "{},{},{:.9e}",
                    self.signal_grid.nu(r),
                    self.idler_grid.nu(c),
                    self.values[(r, c)].norm_sqr()
                )?;
            }
        }
        Ok(())
    }
}

/// Trace over the partner arm; unit area and FWHM.
pub fn marginal_spectrum(jsa: &JointSpectralAmplitude, arm: Arm) -> Marginal {
    filtered_marginal(jsa, arm, None)
}

/// Marginal of `arm` after an optional filter on that same arm, renormalized.
pub fn filtered_marginal(
    jsa: &JointSpectralAmplitude,
    arm: Arm,
    filter: Option<&SpectralFilter>,
) -> Marginal {
    let (g, other) = match arm {
        Arm::Signal => (jsa.signal_grid, jsa.idler_grid),
        Arm::Idler => (jsa.idler_grid, jsa.signal_grid),
    };
    let mut intensity: Vec<f64> = (0..g.n)
        .map(|k| {
            let s: f64 = (0..other.n)
                .map(|m| match arm {
                    Arm::Signal => jsa.values[(k, m)].norm_sqr(),
                    Arm::Idler => jsa.values[(m, k)].norm_sqr(),
                })
                .sum();
            s * other.step * filter.map_or(1.0, |f| f.power(g.nu(k)))
        })
        .collect();
    let area: f64 = intensity.iter().sum::<f64>() * g.step;
    if area > 0.0 {
        intensity.iter_mut().for_each(|v| *v /= area);
    }
    let w = fwhm(&intensity, g.step);
    Marginal { freqs: g.freqs(), intensity, fwhm: w }
}

pub fn write_marginal_csv<W: Write>(m: &Marginal, mut w: W) -> std::io::Result<()> {
    writeln!(w, "nu_GHz,intensity")?;
    for (f, v) in m.freqs.iter().zip(&m.intensity) {
        writeln!(w, "{f},{v:.9e}")?;
    }
    Ok(())
}

/// Amplitude matrix sqrt(dnu_s dnu_i) f H_s H_i on explicit frequency lattices.
pub(crate) struct SampledPair {
    pub signal: Vec<f64>,
    pub m: DMatrix<Complex64>,
}

/// Lattice k*step (k integer) covering [lo, hi].
fn lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k0 = (lo / step - 1e-9).ceil() as i64;
    let k1 = (hi / step + 1e-9).floor() as i64;
    (k0..=k1).map(|k| k as f64 * step).collect()
}

fn axis(g: &FreqGrid, filter: Option<&SpectralFilter>, step: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (g.start, g.nu(g.n - 1));
    if let Some(f) = filter {
        let (a, b) = f.support(1e-14);
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if hi < lo {
        return Vec::new();
    }
    lattice(lo, hi, step)
}

pub(crate) fn sample_pair(
    jsa: &JointSpectralAmplitude,
    signal_filter: Option<&SpectralFilter>,
    idler_filter: Option<&SpectralFilter>,
    signal_step: f64,
    idler_step: f64,
) -> SampledPair {
    let signal = axis(&jsa.signal_grid, signal_filter, signal_step);
    let idler = axis(&jsa.idler_grid, idler_filter, idler_step);
    let w = (signal_step * idler_step).sqrt();
    let hs: Vec<Complex64> =
        signal.iter().map(|&x| signal_filter.map_or(Complex64::new(1.0, 0.0), |f| f.transfer(x))).collect();
    let hi: Vec<Complex64> =
        idler.iter().map(|&x| idler_filter.map_or(Complex64::new(1.0, 0.0), |f| f.transfer(x))).collect();
    let m = DMatrix::from_fn(signal.len(), idler.len(), |r, c| {
        jsa.amplitude_at(signal[r], idler[c]) * hs[r] * hi[c] * w
    });
    SampledPair { signal, m }
}

fn default_step(g: &FreqGrid, f: Option<&SpectralFilter>) -> f64 {
    match f {
        Some(f) => g.step.min(f.fwhm / 64.0),
        None => g.step,
    }
}

/// Unfiltered baseline efficiency and the scalar that absorbs the filter's
/// non-spectral losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldingCalibration {
    /// Probability of detecting the signal given a herald, no filters.
    pub baseline: f64,
    /// Multiplies the spectral transmission whenever a signal filter is present.
    pub insertion: f64,
}

impl Default for HeraldingCalibration {
    fn default() -> Self {
        Self { baseline: 0.092, insertion: 1.0 }
    }
}

impl HeraldingCalibration {
    /// Choose `insertion` so that `filter` on the signal arm of `jsa` yields `target`.
    pub fn calibrate(
        jsa: &JointSpectralAmplitude,
        filter: &SpectralFilter,
        baseline: f64,
        target: f64,
    ) -> Result<Self> {
        if !(baseline > 0.0 && baseline <= 1.0 && target > 0.0 && target <= 1.0) {
            return invalid("efficiencies must lie in (0, 1]");
        }
        let t = spectral_transmission(jsa, Some(filter), None)?;
        Ok(Self { baseline, insertion: target / (baseline * t) })
    }

    pub fn efficiency(&self, spectral_transmission: f64, signal_filtered: bool) -> f64 {
        let k = if signal_filtered { self.insertion } else { 1.0 };
        self.baseline * spectral_transmission * k
    }
}

/// Probability that the signal passes `signal_filter` given a herald behind
/// `idler_filter`.
pub fn spectral_transmission(
    jsa: &JointSpectralAmplitude,
    signal_filter: Option<&SpectralFilter>,
    idler_filter: Option<&SpectralFilter>,
) -> Result<f64> {
    let is = default_step(&jsa.idler_grid, idler_filter);
    let both = sample_pair(jsa, signal_filter, idler_filter, default_step(&jsa.signal_grid, signal_filter), is);
    let herald = sample_pair(jsa, None, idler_filter, jsa.signal_grid.step, is);
    let num: f64 = both.m.iter().map(|c| c.norm_sqr()).sum();
    let den: f64 = herald.m.iter().map(|c| c.norm_sqr()).sum();
    if !(den > 0.0) {
        return Err(Error::EfficiencyUnderflow(0.0));
    }
    Ok((num / den).min(1.0))
}

/// Reduced signal state behind the filters, on `grid` (t = 0 at the pulse center).
#[derive(Debug, Clone)]
pub struct HeraldedState {
    pub state: TwoTimeCoherence,
    pub spectral_transmission: f64,
    pub heralding_efficiency: f64,
}

/// Trace out the idler. Signal frequencies are sampled on the lattice dual to
/// `grid` (spacing 1/(n dt)), so the time-domain state carries the same spectrum
/// as the amplitude matrix.
pub fn heralded_signal_state(
    jsa: &JointSpectralAmplitude,
    signal_filter: Option<&SpectralFilter>,
    idler_filter: Option<&SpectralFilter>,
    grid: TimeGrid,
    calibration: &HeraldingCalibration,
) -> Result<HeraldedState> {
    let ds = 1.0 / (grid.n as f64 * grid.dt * GHZ_PS);
    let di = default_step(&jsa.idler_grid, idler_filter);
    let pair = sample_pair(jsa, signal_filter, idler_filter, ds, di);
    if pair.signal.len() > grid.n {
        return Err(Error::Grid(format!(
            "time step {} ps aliases the {:.0} GHz signal band; use dt <= {:.3} ps",
            grid.dt,
            pair.signal.len() as f64 * ds,
            1.0 / (pair.signal.len() as f64 * ds * GHZ_PS) * grid.dt * grid.n as f64
                / grid.n as f64
        )));
    }
    let transmission = spectral_transmission(jsa, signal_filter, idler_filter)?;
    let eff = calibration.efficiency(transmission, signal_filter.is_some());
    if !(eff >= 1e-9) {
        return Err(Error::EfficiencyUnderflow(eff));
    }
    let k = &pair.m * pair.m.adjoint();
    let e = DMatrix::from_fn(grid.n, pair.signal.len(), |t, s| {
        Complex64::from_polar(ds.sqrt(), 2.0 * PI * pair.signal[s] * grid.t(t) * GHZ_PS)
    });
    let rho = &e * k * e.adjoint();
    Ok(HeraldedState {
        state: TwoTimeCoherence::from_parts_unchecked(grid, rho),
        spectral_transmission: transmission,
        heralding_efficiency: eff,
    })
}

/// Tr(rho_s^2) of the filtered reduced signal state from the singular values of the
/// sampled amplitude matrix.
pub fn schmidt_purity(
    jsa: &JointSpectralAmplitude,
    signal_filter: Option<&SpectralFilter>,
    idler_filter: Option<&SpectralFilter>,
) -> Result<f64> {
    let ss = default_step(&jsa.signal_grid, signal_filter);
    schmidt_purity_sampled(jsa, signal_filter, idler_filter, ss)
}

/// As [`schmidt_purity`] with an explicit signal-frequency spacing.
pub fn schmidt_purity_sampled(
    jsa: &JointSpectralAmplitude,
    signal_filter: Option<&SpectralFilter>,
    idler_filter: Option<&SpectralFilter>,
    signal_step: f64,
) -> Result<f64> {
    let pair = sample_pair(
        jsa,
        signal_filter,
        idler_filter,
        signal_step,
        default_step(&jsa.idler_grid, idler_filter),
    );
    if pair.m.is_empty() {
        return Err(Error::EfficiencyUnderflow(0.0));
    }
    // drop all-zero rows and columns before the decomposition
    let rows: Vec<usize> =
        (0..pair.m.nrows()).filter(|&r| pair.m.row(r).iter().any(|c| c.norm_sqr() > 0.0)).collect();
    let cols: Vec<usize> =
        (0..pair.m.ncols()).filter(|&c| pair.m.column(c).iter().any(|v| v.norm_sqr() > 0.0)).collect();
    let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| pair.m[(rows[r], cols[c])]);
    let m = if m.nrows() > m.ncols() { m.adjoint() } else { m };
    let sv = m.singular_values();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::EfficiencyUnderflow(0.0));
    }
    Ok(sv.iter().map(|s| (s * s / total).powi(2)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_jsa(tau: f64) -> JointSpectralAmplitude {
        let g = FreqGrid::symmetric(800.0, 2.5).unwrap();
        build_jsa(tau, PhasematchParams::default(), g, g).unwrap()
    }

    #[test]
    fn normalized_and_anticorrelated() {
        let j = reference_jsa(10.0);
        assert!((j.norm_sqr() - 1.0).abs() < 1e-9);
        assert!(j.frequency_correlation() < 0.0);
    }

    #[test]
    fn signal_narrower_than_idler() {
        for tau in [3.0, 6.0, 10.0] {
            let j = reference_jsa(tau);
            let s = marginal_spectrum(&j, Arm::Signal);
            let i = marginal_spectrum(&j, Arm::Idler);
            assert!(s.fwhm < i.fwhm, "{tau}: {} {}", s.fwhm, i.fwhm);
            let area: f64 = s.intensity.iter().sum::<f64>() * j.signal_grid.step;
            assert!((area - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_branch_with_unit_asymmetry_is_symmetric() {
        let g = FreqGrid::symmetric(600.0, 2.0).unwrap();
        let pm = PhasematchParams {
            pm_bandwidth: 60.0,
            asymmetry: 1.0,
            branch: PmBranch::OppositeSign,
            ..Default::default()
        };
        let j = build_jsa(10.0, pm, g, g).unwrap();
        let s = marginal_spectrum(&j, Arm::Signal);
        let i = marginal_spectrum(&j, Arm::Idler);
        assert!((s.fwhm - i.fwhm).abs() < 0.01 * s.fwhm);
    }

    #[test]
    fn degenerate_same_branch_rejected() {
        let pm = PhasematchParams { asymmetry: 1.0, ..Default::default() };
        let g = FreqGrid::symmetric(200.0, 2.0).unwrap();
        assert!(build_jsa(10.0, pm, g, g).is_err());
    }

    #[test]
    fn narrow_grid_rejected() {
        let g = FreqGrid::symmetric(60.0, 1.0).unwrap();
        assert!(matches!(build_jsa(3.0, PhasematchParams::default(), g, g), Err(Error::Grid(_))));
    }

    #[test]
    fn cw_pump_lives_on_the_antidiagonal() {
        let g = FreqGrid::symmetric(400.0, 2.0).unwrap();
        let j = build_jsa(f64::INFINITY, PhasematchParams::default(), g, g).unwrap();
        for r in 0..g.n {
            for c in 0..g.n {
                if r + c != g.n - 1 {
                    assert_eq!(j.values()[(r, c)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn asymmetry_inversion_swaps_arms() {
        let g = FreqGrid::symmetric(800.0, 4.0).unwrap();
        let a = build_jsa(6.0, PhasematchParams { asymmetry: 0.5, ..Default::default() }, g, g).unwrap();
        let b = build_jsa(6.0, PhasematchParams { asymmetry: 2.0, ..Default::default() }, g, g).unwrap();
        for r in (0..g.n).step_by(7) {
            for c in (0..g.n).step_by(5) {
                assert!((a.values()[(r, c)] - b.values()[(c, r)]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn separable_purity_is_one() {
        let g = FreqGrid::symmetric(100.0, 1.0).unwrap();
        let m = DMatrix::from_fn(g.n, g.n, |r, c| {
            let (x, y) = (g.nu(r), g.nu(c));
            Complex64::new((-x * x / 200.0 - y * y / 800.0).exp(), 0.0)
        });
        let j = JointSpectralAmplitude::from_matrix(g, g, m).unwrap();
        assert!((schmidt_purity(&j, None, None).unwrap() - 1.0).abs() < 1e-10);
    }
}
