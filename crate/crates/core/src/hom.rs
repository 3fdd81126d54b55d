//! Two-photon interference at a 50:50 beamsplitter: coincidence densities,
//! coalescence probability, signal-idler dips and detector-smeared peak models.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coherence::{apply_filter, qd_coherence, SpectralFilter, TemporalAmplitude, TwoTimeCoherence};
use crate::error::{invalid, Error, Result};
use crate::grid::{TimeGrid, GHZ_PS};
use crate::quad::golden_max;
use crate::spdc::JointSpectralAmplitude;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    Parallel,
    Orthogonal,
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" | "par" => Ok(Self::Parallel),
            "orthogonal" | "perp" | "perpendicular" => Ok(Self::Orthogonal),
            _ => invalid(format!("unknown polarization `{s}` (parallel, orthogonal)")),
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Parallel => "parallel",
            Self::Orthogonal => "orthogonal",
        })
    }
}

/// Joint detection-time densities behind the splitter. `values[i * n + j]` is the
/// density of one click in each output at (t1_i, t2_j); `bunched` is the density
/// of both photons leaving through the same port at those times.
#[derive(Debug, Clone)]
pub struct CoincidenceDensity {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub bunched: Vec<f64>,
    pub polarization: Polarization,
}

/// Density over tau = t2 - t1 on `tau_k = tau0 + k dt`, per ps.
#[derive(Debug, Clone, PartialEq)]
pub struct TauDensity {
    pub tau0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TauDensity {
    pub fn tau(&self, k: usize) -> f64 {
        self.tau0 + k as f64 * self.dt
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt
    }

    fn index_of(&self, tau: f64) -> Option<usize> {
        let k = ((tau - self.tau0) / self.dt).round();
        (k >= 0.0 && (k as usize) < self.values.len()).then_some(k as usize)
    }

    /// Density at `tau`, nearest sample, zero outside.
    pub fn at(&self, tau: f64) -> f64 {
        self.index_of(tau).map_or(0.0, |k| self.values[k])
    }
}

impl CoincidenceDensity {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Probability of one click in each output.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dt * self.grid.dt
    }

    pub fn bunched_integral(&self) -> f64 {
        self.bunched.iter().sum::<f64>() * self.grid.dt * self.grid.dt
    }

    /// Marginal over tau = t2 - t1.
    pub fn tau_marginal(&self) -> TauDensity {
        let n = self.grid.n;
        let dt = self.grid.dt;
        let mut v = vec![0.0; 2 * n - 1];
        for i in 0..n {
            for j in 0..n {
                v[j + n - 1 - i] += self.values[i * n + j];
            }
        }
        v.iter_mut().for_each(|x| *x *= dt);
        TauDensity { tau0: -((n - 1) as f64) * dt, dt, values: v }
    }
}

/// Two single photons `a` and `b` (b delayed by `delay` ps) on a 50:50 splitter.
/// p(t1,t2) = 1/4 [a(t1) b(t2) + a(t2) b(t1) - 2 Re Ga(t1,t2) Gb(t2,t1)], the
/// interference term present only for parallel polarization.
pub fn coincidence_density(
    a: &TwoTimeCoherence,
    b: &TwoTimeCoherence,
    pol: Polarization,
    delay: f64,
) -> Result<CoincidenceDensity> {
    coincidence_density_with_splitter(a, b, pol, delay, 0.5)
}

/// As [`coincidence_density`] for a splitter of intensity reflectivity `r`:
/// p = r^2 a(t1) b(t2) + (1-r)^2 a(t2) b(t1) - 2 r (1-r) Re Ga Gb*. Photon `a`
/// reaches output 1 on reflection.
pub fn coincidence_density_with_splitter(
    a: &TwoTimeCoherence,
    b: &TwoTimeCoherence,
    pol: Polarization,
    delay: f64,
    reflectivity: f64,
) -> Result<CoincidenceDensity> {
    if !(0.0..=1.0).contains(&reflectivity) {
        return invalid("reflectivity must lie in [0, 1]");
    }
    let (rr, tt, rt) = (reflectivity * reflectivity, (1.0 - reflectivity).powi(2), reflectivity * (1.0 - reflectivity));
    if !a.grid().compatible(&b.grid()) {
        return Err(Error::Grid("coincidence density needs both photons on one grid".into()));
    }
    let b = if delay != 0.0 { b.delayed(delay)? } else { b.clone() };
    let grid = a.grid();
    let n = grid.n;
    let da = a.diagonal();
    let db = b.diagonal();
    let interfere = pol == Polarization::Parallel;
    let mut values = vec![0.0; n * n];
    let mut bunched = vec![0.0; n * n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    values
        .par_chunks_mut(n)
        .zip(bunched.par_chunks_mut(n))
        .enumerate()
        .map(|(i, (row, brow))| {
            let (mut w, mut s) = (0.0f64, 0.0f64);
            for j in 0..n {
                let (ab, ba) = (da[i] * db[j], da[j] * db[i]);
                let x = if interfere { 2.0 * rt * (a.get(i, j) * b.get(i, j).conj()).re } else { 0.0 };
                let p = rr * ab + tt * ba - x;
                s = s.max(0.5 * (ab + ba));
                w = w.min(p);
                row[j] = p.max(0.0);
                brow[j] = (rt * (ab + ba) + x).max(0.0);
            }
            (w, s)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .for_each(|(w, s)| {
            worst = worst.min(w);
            scale = scale.max(s);
        });
    if worst < -1e-9 * scale {
        return invalid(format!(
            "coincidence density negative ({worst:.3e}); inputs are not valid states"
        ));
    }
    Ok(CoincidenceDensity { grid, values, bunched, polarization: pol })
}

/// P_C = 1 - (parallel integral)/(orthogonal integral), which equals Tr(rho_a rho_b).
pub fn coalescence_probability(a: &TwoTimeCoherence, b: &TwoTimeCoherence) -> Result<f64> {
    if !a.grid().compatible(&b.grid()) {
        return Err(Error::Grid("states on different grids".into()));
    }
    let n = a.grid().n;
    let dt2 = a.grid().dt * a.grid().dt;
    let da = a.diagonal();
    let db = b.diagonal();
    let (perp, inter) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut p = 0.0;
            let mut x = 0.0;
            for j in 0..n {
                p += 0.25 * (da[i] * db[j] + da[j] * db[i]);
                x += 0.5 * (a.get(i, j) * b.get(i, j).conj()).re;
            }
            (p, x)
        })
        .reduce(|| (0.0, 0.0), |u, v| (u.0 + v.0, u.1 + v.1));
    let par = (perp - inter) * dt2;
    let perp = perp * dt2;
    Ok((1.0 - par / perp).clamp(0.0, 1.0))
}

/// How the dot photon is described in the theory bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dephasing {
    /// Transform-limited exponential wavepacket of the given linewidth.
    None,
    /// Dephased state with lifetime T1 and coherence time T2 (ps).
    Included { t1: f64, t2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryBound {
    pub value: f64,
    /// Delay of the filtered SPDC pulse relative to the dot's emission onset, ps.
    pub delay: f64,
    pub filter_transmission: f64,
}

/// Best achievable overlap between the dot photon and the filtered SPDC pulse,
/// maximized over their relative arrival time. The dot emission starts at t = 0 on
/// the pulse's grid, which must extend at least 8 lifetimes past it.
pub fn max_theoretical_coalescence(
    qd_linewidth: f64,
    filter: &SpectralFilter,
    spdc_pulse: &TemporalAmplitude,
    dephasing: Dephasing,
) -> Result<TheoryBound> {
    if !(qd_linewidth > 0.0) {
        return invalid("dot linewidth must be positive");
    }
    let grid = spdc_pulse.grid();
    let filtered = apply_filter(spdc_pulse, filter)?;
    let phi = filtered.state;
    let (centroid, width) = centroid_and_width(&phi);
    let objective: Box<dyn Fn(f64) -> f64 + Sync> = match dephasing {
        Dephasing::None => {
            let psi = TemporalAmplitude::lorentzian_emitter(qd_linewidth, 0.0, grid)?;
            Box::new(move |d: f64| psi.inner(&phi.delayed(d)).map(|c| c.norm_sqr()).unwrap_or(0.0))
        }
        Dephasing::Included { t1, t2 } => {
            let g = qd_coherence(t1, t2, grid)?;
            Box::new(move |d: f64| g.expectation(&phi.delayed(d)).unwrap_or(0.0))
        }
    };
    let t1 = match dephasing {
        Dephasing::None => crate::coherence::lifetime_from_linewidth(qd_linewidth),
        Dephasing::Included { t1, .. } => t1,
    };
    // delay d moves the pulse centroid to centroid + d; scan it over the dot's
    // emission window
    let lo = -centroid - 2.0 * width;
    let hi = -centroid + 2.0 * t1 + 2.0 * width;
    let step = ((hi - lo) / 240.0).max(grid.dt);
    let m = ((hi - lo) / step).ceil() as usize + 1;
    let vals: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|k| {
            let d = lo + k as f64 * step;
            (d, objective(d))
        })
        .collect();
    let (best_d, _) = vals.iter().cloned().fold((lo, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let (d, v) = golden_max(&objective, best_d - step, best_d + step, 1e-4);
    Ok(TheoryBound { value: v.clamp(0.0, 1.0), delay: d, filter_transmission: filtered.transmitted_fraction })
}

fn centroid_and_width(phi: &TemporalAmplitude) -> (f64, f64) {
    let g = phi.grid();
    let i = phi.intensity();
    let mean: f64 = i.iter().enumerate().map(|(k, v)| g.t(k) * v).sum::<f64>() * g.dt;
    let var: f64 = i.iter().enumerate().map(|(k, v)| (g.t(k) - mean).powi(2) * v).sum::<f64>() * g.dt;
    (mean, var.sqrt().min(0.25 * g.span()))
}

/// A time grid for the theory bound: onset at zero, `lead` ps of lead-in, at least
/// 12 dot lifetimes and 16 filter response times of tail.
pub fn theory_grid(t1: f64, filter: &SpectralFilter, dt: f64) -> Result<TimeGrid> {
    let resp = crate::coherence::transform_limit(filter.fwhm, filter.shape)?;
    let lead = 16.0 * resp;
    TimeGrid::covering(-lead, (12.0 * t1).max(16.0 * resp), dt)
}

/// Fitted or computed model parameters carried with a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelComponents {
    pub t1: f64,
    pub t2: f64,
    pub amplitude: f64,
}

/// Rate per ps versus delay (or tau) on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct HomModelCurve {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    pub jitter_fwhm: f64,
    pub components: Option<ModelComponents>,
}

impl HomModelCurve {
    pub fn write_csv<W: Write>(&self, mut w: W, label: &str) -> std::io::Result<()> {
        writeln!(w, "{label},value")?;
        for (d, v) in self.delays.iter().zip(&self.values) {
            writeln!(w, "{d},{v:.9e}")?;
        }
        Ok(())
    }

    /// Indices of strict interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        (1..self.values.len().saturating_sub(1))
            .filter(|&k| self.values[k] < self.values[k - 1] && self.values[k] < self.values[k + 1])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DipCurve {
    pub curve: HomModelCurve,
    /// Coincidence probability with the interference term dropped.
    pub baseline: f64,
    pub visibility: f64,
}

/// Signal and idler of one pair meet on the splitter with relative delay tau; an
/// optional filter sits in front of one output detector. Requires identical
/// signal and idler frequency grids.
pub fn hom_dip_curve(
    jsa: &JointSpectralAmplitude,
    delays: &[f64],
    post_bs_filter: Option<&SpectralFilter>,
) -> Result<DipCurve> {
    if !jsa.signal_grid.same_as(&jsa.idler_grid) {
        return Err(Error::Grid("signal-idler interference needs a common frequency grid".into()));
    }
    if delays.is_empty() {
        return invalid("no delays given");
    }
    let g = jsa.signal_grid;
    let n = g.n;
    let f = jsa.values();
    let w: Vec<f64> = (0..n).map(|k| post_bs_filter.map_or(1.0, |h| h.power(g.nu(k)))).collect();
    // x: frequency detected in the unfiltered port, y: in the filtered port
    let mut base = 0.0;
    for x in 0..n {
        for y in 0..n {
            base += w[y] * (f[(x, y)].norm_sqr() + f[(y, x)].norm_sqr());
        }
    }
    base *= 0.25;
    let cross: Vec<Complex64> = (0..n * n)
        .map(|k| {
            let (x, y) = (k / n, k % n);
            f[(x, y)].conj() * f[(y, x)] * w[y]
        })
        .collect();
    let values: Vec<f64> = delays
        .par_iter()
        .map(|&tau| {
            let rot: Vec<Complex64> =
                (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * g.nu(k) * tau * GHZ_PS)).collect();
            let mut s = 0.0;
            for x in 0..n {
                for y in 0..n {
                    s += (cross[x * n + y] * rot[x] * rot[y].conj()).re;
                }
            }
            ((base - 0.5 * s) / base).max(0.0)
        })
        .collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cell = g.step * g.step;
    Ok(DipCurve {
        curve: HomModelCurve { delays: delays.to_vec(), values, jitter_fwhm: 0.0, components: None },
        baseline: base * cell,
        visibility: 1.0 - min,
    })
}

/// Gaussian of the given FWHM sampled on step `dt`, unit sum, odd length.
pub(crate) fn gaussian_kernel(fwhm: f64, dt: f64) -> Vec<f64> {
    if fwhm <= 0.0 {
        return vec![1.0];
    }
    let sigma = fwhm / (8.0 * LN_2).sqrt();
    let half = (6.0 * sigma / dt).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = (i as f64 - half as f64) * dt;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Convolve a tau density with the combined detector jitter and integrate it over
/// bins of width `bin` centered on multiples of `bin`. Values are bin-averaged
/// rates per ps, so the total (sum of value * bin) is conserved.
pub fn smear_with_detector(density: &TauDensity, jitter_fwhm: f64, bin: f64) -> Result<HomModelCurve> {
    if jitter_fwhm < 0.0 || !(bin > 0.0) {
        return invalid("jitter must be >= 0 and bin > 0");
    }
    let k = gaussian_kernel(jitter_fwhm, density.dt);
    let half = (k.len() - 1) / 2;
    let smeared = crate::fft::convolve_real(&density.values, &k);
    let tau0 = density.tau0 - half as f64 * density.dt;
    let dt = density.dt;
    if bin <= dt * (1.0 + 1e-9) {
        let delays = (0..smeared.len()).map(|i| tau0 + i as f64 * dt).collect();
        return Ok(HomModelCurve { delays, values: smeared, jitter_fwhm, components: None });
    }
    let masses = bin_masses(&smeared, tau0, dt, bin);
    let values = masses.1.iter().map(|m| m / bin).collect();
    Ok(HomModelCurve { delays: masses.0, values, jitter_fwhm, components: None })
}

/// Split sample masses (density * dt, sample cell [tau - dt/2, tau + dt/2]) over
/// bins [(m - 1/2) bin, (m + 1/2) bin). Returns (bin centers, masses).
pub(crate) fn bin_masses(values: &[f64], tau0: f64, dt: f64, bin: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = tau0 - 0.5 * dt;
    let hi = tau0 + (values.len() as f64 - 0.5) * dt;
    let m0 = (lo / bin + 0.5).floor() as i64;
    let m1 = (hi / bin + 0.5).floor() as i64;
    let nb = (m1 - m0 + 1) as usize;
    let mut out = vec![0.0; nb];
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let a = tau0 + (i as f64 - 0.5) * dt;
        let b = a + dt;
        let mass = v * dt;
        let ma = (a / bin + 0.5).floor() as i64;
        let mb = (b / bin + 0.5).floor() as i64;
        if ma == mb {
            out[(ma - m0) as usize] += mass;
        } else {
            for m in ma..=mb {
                let e0 = ((m as f64 - 0.5) * bin).max(a);
                let e1 = ((m as f64 + 0.5) * bin).min(b);
                if e1 > e0 {
                    out[(m - m0) as usize] += mass * (e1 - e0) / dt;
                }
            }
        }
    }
    let centers = (0..nb).map(|k| (m0 + k as i64) as f64 * bin).collect();
    (centers, out)
}

/// tau marginals for a dephased dot photon (T1, T2) against a pure photon phi on the
/// same grid. The interference part factorizes as exp(-gamma_d |tau|) J(tau) with J
/// independent of T2, so a T2 scan costs O(len) per value.
#[derive(Debug, Clone)]
pub struct DotPulseTauModel {
    pub t1: f64,
    pub tau0: f64,
    pub dt: f64,
    /// Orthogonal-polarization marginal, per ps.
    pub orthogonal: Vec<f64>,
    /// J(tau) >= the interference term's magnitude for every T2.
    pub interference: Vec<f64>,
}

impl DotPulseTauModel {
    /// `phi` must already carry its delay relative to the dot onset at t = 0.
    pub fn new(t1: f64, phi: &TemporalAmplitude) -> Result<Self> {
        Self::from_state(t1, &phi.to_coherence())
    }

    /// As [`DotPulseTauModel::new`] for a mixed pulse.
    pub fn from_state(t1: f64, pulse: &TwoTimeCoherence) -> Result<Self> {
        if !(t1 > 0.0) {
            return invalid("T1 must be positive");
        }
        let g = pulse.grid();
        let n = g.n;
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let t = g.t(i);
                if t < 0.0 { 0.0 } else { (-t / (2.0 * t1)).exp() }
            })
            .collect();
        let un: f64 = u.iter().map(|x| x * x).sum::<f64>() * g.dt;
        let u: Vec<f64> = u.iter().map(|x| x / un.sqrt()).collect();
        let a: Vec<f64> = u.iter().map(|x| x * x).collect();
        let b = pulse.diagonal();
        let m = 2 * n - 1;
        let (orth, inter): (Vec<f64>, Vec<f64>) = (0..m)
            .into_par_iter()
            .map(|k| {
                // tau = (k - (n-1)) dt = t2 - t1
                let s = k as i64 - (n as i64 - 1);
                let (mut o, mut x) = (0.0, 0.0);
                for i in 0..n as i64 {
                    let j = i + s;
                    if j < 0 || j >= n as i64 {
                        continue;
                    }
                    let (i, j) = (i as usize, j as usize);
                    o += a[i] * b[j] + a[j] * b[i];
                    if u[i] != 0.0 && u[j] != 0.0 {
                        x += u[i] * u[j] * pulse.get(i, j).re;
                    }
                }
                (0.25 * o * g.dt, 0.5 * x * g.dt)
            })
            .unzip();
        Ok(Self { t1, tau0: -((n - 1) as f64) * g.dt, dt: g.dt, orthogonal: orth, interference: inter })
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.tau0 + k as f64 * self.dt
    }

    pub fn orthogonal_density(&self) -> TauDensity {
        TauDensity { tau0: self.tau0, dt: self.dt, values: self.orthogonal.clone() }
    }

    /// Parallel marginal for coherence time `t2` with interference amplitude `c`
    /// (c = 1 is the ideal splitter).
    pub fn parallel_density(&self, t2: f64, c: f64) -> TauDensity {
        let gd = 1.0 / t2 - 0.5 / self.t1;
        let values = (0..self.orthogonal.len())
            .map(|k| {
                let tau = self.tau(k).abs();
                self.orthogonal[k] - c * (-gd * tau).exp() * self.interference[k]
            })
            .collect();
        TauDensity { tau0: self.tau0, dt: self.dt, values }
    }

    pub fn interference_density(&self, t2: f64) -> TauDensity {
        let gd = 1.0 / t2 - 0.5 / self.t1;
        let values =
            (0..self.orthogonal.len()).map(|k| (-gd * self.tau(k).abs()).exp() * self.interference[k]).collect();
        TauDensity { tau0: self.tau0, dt: self.dt, values }
    }
}
