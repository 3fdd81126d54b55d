use nalgebra::{DMatrix, DVector};

use super::CoincidenceHistogram;
use crate::coherence::TwoTimeCoherence;
use crate::error::{invalid, Error, Result};
use crate::hom::{gaussian_kernel, DotPulseTauModel, HomModelCurve, ModelComponents, TauDensity};
use crate::quad::golden_max;

/// How a true time maps onto histogram bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinResponse {
    /// Plain integration over the bin.
    Box,
    /// Triangular weight of base 2 bins centered `offset` ps after the bin center.
    /// Differences of two floored timestamps, and times floored on a grid whose
    /// phase drifts from period to period, bin this way.
    Triangular { offset: f64 },
    /// Micro times from timestamps floored to the bin and reduced modulo a
    /// period that is not a multiple of it: the flooring phase cycles through
    /// `phases` equally likely values. The many-phase limit is
    /// `Triangular { offset: bin / 2 }`.
    Phased { phases: u32 },
}

impl BinResponse {
    /// Response of micro-time histograms for this period and bin, both in ps.
    pub fn micro(rep: u64, bin: u64) -> Self {
        let (mut a, mut b) = (rep, bin);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        BinResponse::Phased { phases: (bin / a.max(1)) as u32 }
    }
}

#[derive(Debug, Clone)]
struct LmOut {
    params: Vec<f64>,
    cov: DMatrix<f64>,
    chi2: f64,
    iterations: usize,
    converged: bool,
}

impl LmOut {
    fn require_converged(self, n: usize) -> Result<Self> {
        if self.converged {
            return Ok(self);
        }
        Err(Error::FitNonConvergence {
            iterations: self.iterations,
            chi2_red: self.chi2 / n.saturating_sub(self.params.len()).max(1) as f64,
            msg: format!("parameters at stop: {:?}", self.params),
        })
    }
}

const MAX_ITER: usize = 300;

fn chi2(y: &[f64], w: &[f64], m: &[f64]) -> f64 {
    y.iter().zip(w).zip(m).map(|((y, w), m)| w * (y - m) * (y - m)).sum()
}

fn jacobian(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    p: &[f64],
    lo: &[f64],
    hi: &[f64],
    step: &[f64],
    n: usize,
) -> DMatrix<f64> {
    let k = p.len();
    let mut j = DMatrix::zeros(n, k);
    for c in 0..k {
        let h = (p[c].abs() * 1e-5).max(step[c]);
        let (a, b) = ((p[c] - h).max(lo[c]), (p[c] + h).min(hi[c]));
        if b <= a {
            continue;
        }
        let mut pa = p.to_vec();
        let mut pb = p.to_vec();
        pa[c] = a;
        pb[c] = b;
        let (ma, mb) = (f(&pa), f(&pb));
        for r in 0..n {
            j[(r, c)] = (mb[r] - ma[r]) / (b - a);
        }
    }
    j
}

/// Box-constrained Levenberg-Marquardt on weighted residuals.
fn levenberg_marquardt(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    w: &[f64],
    p0: &[f64],
    lo: &[f64],
    hi: &[f64],
    step: &[f64],
) -> Result<LmOut> {
    let n = y.len();
    let k = p0.len();
    let mut p: Vec<f64> = p0.iter().zip(lo.iter().zip(hi)).map(|(x, (a, b))| x.clamp(*a, *b)).collect();
    let mut m = f(&p);
    let mut c2 = chi2(y, w, &m);
    if !c2.is_finite() {
        return invalid("model is not finite at the starting point");
    }
    let mut lambda: f64 = 1e-3;
    let mut it = 0;
    loop {
        it += 1;
        let converged = it <= MAX_ITER;
        let j = jacobian(f, &p, lo, hi, step, n);
        let mut a: DMatrix<f64> = DMatrix::zeros(k, k);
        let mut g: DVector<f64> = DVector::zeros(k);
        for r in 0..n {
            let res = y[r] - m[r];
            for c in 0..k {
                let jc = j[(r, c)] * w[r];
                g[c] += jc * res;
                for d in c..k {
                    a[(c, d)] += jc * j[(r, d)];
                }
            }
        }
        for c in 0..k {
            for d in 0..c {
                a[(c, d)] = a[(d, c)];
            }
        }
        let mut improved = false;
        while lambda < 1e14 {
            let mut aa = a.clone();
            for c in 0..k {
                aa[(c, c)] += lambda * a[(c, c)].max(1e-300);
            }
            let Some(delta) = aa.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let pn: Vec<f64> = (0..k).map(|c| (p[c] + delta[c]).clamp(lo[c], hi[c])).collect();
            let mn = f(&pn);
            let cn = chi2(y, w, &mn);
            if cn.is_finite() && cn <= c2 {
                let gain = c2 - cn;
                let moved = (0..k).any(|c| (pn[c] - p[c]).abs() > 1e-10 * p[c].abs().max(step[c]));
                p = pn;
                m = mn;
                c2 = cn;
                lambda = (lambda / 10.0).max(1e-12);
                improved = gain > 1e-10 * c2.max(1.0) && moved;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || !converged {
            let j = jacobian(f, &p, lo, hi, step, n);
            let mut a: DMatrix<f64> = DMatrix::zeros(k, k);
            for r in 0..n {
                for c in 0..k {
                    for d in 0..k {
                        a[(c, d)] += w[r] * j[(r, c)] * j[(r, d)];
                    }
                }
            }
            let cov = a.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
            return Ok(LmOut { params: p, cov, chi2: c2, iterations: it.min(MAX_ITER), converged });
        }
    }
}

/// Lowest model value used as a variance when reweighting.
const MODEL_FLOOR: f64 = 0.1;

/// Refits with weights 1 / model until the parameters settle. The fixed point
/// solves the Poisson likelihood equations; Neyman weights alone pull decays short
/// where the tail is sparse.
fn poisson_refine(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    start: LmOut,
    lo: &[f64],
    hi: &[f64],
    step: &[f64],
) -> Result<LmOut> {
    let mut out = start;
    for _ in 0..8 {
        let w: Vec<f64> = f(&out.params).iter().map(|m| 1.0 / m.max(MODEL_FLOOR)).collect();
        let next = levenberg_marquardt(f, y, &w, &out.params, lo, hi, step)?;
        let settled = (0..step.len()).all(|c| (next.params[c] - out.params[c]).abs() <= 1e-6 * out.params[c].abs().max(step[c]));
        out = next;
        if settled {
            break;
        }
    }
    Ok(out)
}

/// Neyman weights 1 / max(counts, 1), for starting fits.
fn weights(h: &CoincidenceHistogram) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let w = h.counts.iter().map(|&c| 1.0 / (c.max(1) as f64)).collect();
    (y, w)
}

/// Fine sampling grid that covers the histogram plus `margin` on both sides.
#[derive(Debug, Clone, Copy)]
struct Fine {
    x0: f64,
    dt: f64,
    n: usize,
}

impl Fine {
    fn new(h: &CoincidenceHistogram, margin: f64, dt: f64) -> Self {
        let lo = h.bin_edges[0] - margin;
        let hi = h.bin_edges[h.bin_edges.len() - 1] + margin;
        Self { x0: lo, dt, n: ((hi - lo) / dt).ceil() as usize + 1 }
    }

    fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dt
    }
}

/// Integrate a fine-grid density (per ps) into the histogram's bins.
fn bin_density(values: &[f64], fine: Fine, h: &CoincidenceHistogram, resp: BinResponse) -> Vec<f64> {
    let nb = h.counts.len();
    let start = h.bin_edges[0];
    // the last bin of a micro-time histogram may be short
    let b = h.bin_edges[1] - start;
    let mut out = vec![0.0; nb];
    for (k, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let x = fine.x(k);
        let mass = v * fine.dt;
        match resp {
            BinResponse::Box => {
                let m = ((x - start) / b).floor();
                if m >= 0.0 && (m as usize) < nb {
                    out[m as usize] += mass;
                }
            }
            BinResponse::Triangular { offset } => {
                let u = (x - start - 0.5 * b - offset) / b;
                let m0 = u.floor();
                let frac = u - m0;
                let m0 = m0 as i64;
                if m0 >= 0 && (m0 as usize) < nb {
                    out[m0 as usize] += mass * (1.0 - frac);
                }
                if m0 + 1 >= 0 && ((m0 + 1) as usize) < nb {
                    out[(m0 + 1) as usize] += mass * frac;
                }
            }
            BinResponse::Phased { phases } => {
                // phase j / P moves the time into bin floor(x / b + j / P) - 1, with
                // j = P standing in for phase 0
                let u = (x - start) / b;
                let share = mass / phases as f64;
                for j in 1..=phases {
                    let m = (u + j as f64 / phases as f64).floor() as i64 - 1;
                    if m >= 0 && (m as usize) < nb {
                        out[m as usize] += share;
                    }
                }
            }
        }
    }
    out
}

/// Mean over the fine cell [x - dt/2, x + dt/2] of the one-sided decay with onset t0.
#[inline]
fn one_sided(x: f64, dt: f64, t0: f64, tau: f64) -> f64 {
    let (a, b) = (x - 0.5 * dt, x + 0.5 * dt);
    if b <= t0 {
        return 0.0;
    }
    let a2 = a.max(t0);
    ((-(a2 - t0) / tau).exp() - (-(b - t0) / tau).exp()) / dt
}

fn resample(d: &TauDensity, dt: f64) -> Vec<f64> {
    let span = (d.values.len() - 1) as f64 * d.dt;
    let n = (span / dt).floor() as usize + 1;
    let mut v: Vec<f64> = (0..n)
        .map(|k| {
            let x = k as f64 * dt / d.dt;
            let i = (x.floor() as usize).min(d.values.len() - 1);
            let f = x - i as f64;
            let b = if i + 1 < d.values.len() { d.values[i + 1] } else { 0.0 };
            d.values[i] * (1.0 - f) + b * f
        })
        .collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Convolve `v` (on `fine`) with a unit-sum kernel whose sample `center` sits at 0.
fn convolve_centered(v: &[f64], kernel: &[f64], center: usize) -> Vec<f64> {
    let full = crate::fft::convolve_real(v, kernel);
    full[center..center + v.len()].to_vec()
}

/// Lifetime model shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum LifetimeModel {
    /// exp(-|tau - c|/T1)/(2 T1) with the detector jitter. With a kernel, the
    /// symmetrized density of t_emitter - t_partner instead, where the partner
    /// photon arrives with the given profile (time after the emitter's onset).
    TwoSided { kernel: Option<TauDensity> },
    /// exp(-(t - t0)/T1)/T1 for t > t0 plus a flat background, with jitter.
    OneSided,
}

#[derive(Debug, Clone)]
pub struct LifetimeFit {
    pub t1: f64,
    pub sigma_t1: f64,
    pub amplitude: f64,
    /// Peak center (two-sided) or onset (one-sided), ps.
    pub center: f64,
    /// Background per bin (one-sided only).
    pub background: f64,
    /// Parameter covariance, order (amplitude, T1, center[, background]).
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// Model counts per bin at the fitted parameters.
    pub model: Vec<f64>,
}

fn check_populated(h: &CoincidenceHistogram) -> Result<()> {
    if h.counts.len() + 1 != h.bin_edges.len() {
        return invalid("histogram edges do not match counts");
    }
    let populated = h.counts.iter().filter(|&&c| c > 0).count();
    if populated < 10 {
        return Err(Error::FitRejected(format!("only {populated} populated bins (need 10)")));
    }
    Ok(())
}

/// Two-sided exponential, Gaussian jitter and triangular binning (the response of
/// time differences between two floored timestamps).
pub fn fit_lifetime(hist: &CoincidenceHistogram, jitter_fwhm: f64, bin: f64) -> Result<LifetimeFit> {
    let b = (hist.bin_edges[hist.bin_edges.len() - 1] - hist.bin_edges[0]) / hist.counts.len().max(1) as f64;
    if (b - bin).abs() > 1e-6 * bin {
        return invalid(format!("histogram bins are {b} ps, expected {bin}"));
    }
    fit_lifetime_with(hist, jitter_fwhm, BinResponse::Triangular { offset: 0.0 }, &LifetimeModel::TwoSided { kernel: None })
}

/// General lifetime fit.
pub fn fit_lifetime_with(
    hist: &CoincidenceHistogram,
    jitter_fwhm: f64,
    response: BinResponse,
    model: &LifetimeModel,
) -> Result<LifetimeFit> {
    check_populated(hist)?;
    if !(jitter_fwhm >= 0.0) {
        return invalid("jitter must be >= 0");
    }
    let nb = hist.counts.len();
    let bw = hist.bin_edges[1] - hist.bin_edges[0];
    let dt = (bw / 32.0).min(4.0);
    let gk = gaussian_kernel(jitter_fwhm, dt);
    // the partner's arrival profile, reversed: g = E * p~ is the density of
    // t_emitter - t_partner
    let kernel = match model {
        LifetimeModel::TwoSided { kernel: Some(k) } => {
            let mut r = resample(k, dt);
            let y0 = -(k.tau0 + (r.len() - 1) as f64 * dt);
            r.reverse();
            Some((r, (y0 / dt).round() as i64))
        }
        _ => None,
    };
    let margin = 0.5 * gk.len() as f64 * dt + 2.0 * bw;
    let fine = Fine::new(hist, margin, dt);
    let (y, w) = weights(hist);
    let total: f64 = y.iter().sum();
    let centers = hist.centers();
    let span = hist.bin_edges[nb] - hist.bin_edges[0];
    let mode = centers[y.iter().enumerate().fold(0, |a, (i, v)| if *v > y[a] { i } else { a })];
    let is_two_sided = matches!(model, LifetimeModel::TwoSided { .. });
    // symmetric grid (k - half) dt for the two-sided shape before the shift c
    let half = ((fine.x0.abs().max(fine.x(fine.n - 1).abs()) + span) / dt).ceil() as usize;

    let eval = |p: &[f64]| -> Vec<f64> {
        let (amp, tau, c) = (p[0], p[1], p[2]);
        let v: Vec<f64> = if is_two_sided {
            let m = 2 * half + 1;
            let e: Vec<f64> = (0..m).map(|k| one_sided((k as f64 - half as f64) * dt, dt, 0.0, tau)).collect();
            let g = match &kernel {
                Some((r, off)) => {
                    let full = crate::fft::convolve_real(&e, r);
                    (0..m as i64)
                        .map(|k| {
                            let i = k - off;
                            if i >= 0 && (i as usize) < full.len() { full[i as usize] } else { 0.0 }
                        })
                        .collect()
                }
                None => e,
            };
            let f: Vec<f64> = (0..m).map(|k| 0.5 * (g[k] + g[m - 1 - k])).collect();
            (0..fine.n)
                .map(|k| {
                    let u = (fine.x(k) - c) / dt + half as f64;
                    if u < 0.0 || u >= (m - 1) as f64 {
                        return 0.0;
                    }
                    let i = u.floor() as usize;
                    let fr = u - i as f64;
                    f[i] * (1.0 - fr) + f[i + 1] * fr
                })
                .collect()
        } else {
            (0..fine.n).map(|k| one_sided(fine.x(k), dt, c, tau)).collect()
        };
        let v = convolve_centered(&v, &gk, (gk.len() - 1) / 2);
        let mut out = bin_density(&v, fine, hist, response);
        let bg = if is_two_sided { 0.0 } else { p[3] };
        out.iter_mut().for_each(|x| *x = *x * amp + bg);
        out
    };

    let tau_hi = 20.0 * span;
    // two-sided decay has variance 2 T1^2 on top of the jitter's
    let t1_start = {
        let m1: f64 = centers.iter().zip(&y).map(|(x, c)| x * c).sum::<f64>() / total.max(1.0);
        let var: f64 = centers.iter().zip(&y).map(|(x, c)| (x - m1).powi(2) * c).sum::<f64>() / total.max(1.0);
        let sj = jitter_fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
        (0.5 * (var - sj * sj)).max(bw * bw).sqrt()
    };
    let (p0, lo, hi, step) = if is_two_sided {
        (
            vec![total, t1_start, mode],
            vec![0.0, 0.05 * bw, hist.bin_edges[0]],
            vec![10.0 * total + 10.0, tau_hi, hist.bin_edges[nb]],
            vec![1e-3 * total.max(1.0), 0.05, 0.05],
        )
    } else {
        let bg = y.iter().take(nb / 8 + 1).sum::<f64>() / (nb / 8 + 1) as f64;
        (
            vec![total, (0.1 * span).max(bw), mode - bw, bg],
            vec![0.0, 0.05 * bw, hist.bin_edges[0], 0.0],
            vec![10.0 * total + 10.0, tau_hi, hist.bin_edges[nb], total + 1.0],
            vec![1e-3 * total.max(1.0), 0.05, 0.05, 1e-3],
        )
    };
    let out = levenberg_marquardt(&eval, &y, &w, &p0, &lo, &hi, &step)?;
    let out = poisson_refine(&eval, &y, out, &lo, &hi, &step)?;
    // a decay time beyond the histogram span, or no gain over a constant, means
    // the data carry no lifetime
    let flat = y.iter().sum::<f64>() / nb as f64;
    let chi2_flat = chi2(&y, &vec![1.0 / flat.max(MODEL_FLOOR); nb], &vec![flat; nb]);
    let p = &out.params;
    if p[1] > 2.0 * span || chi2_flat - out.chi2 < 25.0 {
        return Err(Error::FitRejected(format!(
            "histogram is consistent with a flat background (T1 {:.1} ps, chi2 gain {:.1})",
            p[1],
            chi2_flat - out.chi2
        )));
    }
    let out = out.require_converged(nb)?;
    let p = &out.params;
    let model_counts = eval(p);
    Ok(LifetimeFit {
        t1: p[1],
        sigma_t1: out.cov[(1, 1)].sqrt(),
        amplitude: p[0],
        center: p[2],
        background: if is_two_sided { 0.0 } else { p[3] },
        covariance: out.cov,
        chi2: out.chi2,
        dof: nb.saturating_sub(p.len()),
        iterations: out.iterations,
        model: model_counts,
    })
}

/// Detection-time distribution within the laser period at one detector: dot
/// photons (onset t0, lifetime T1) plus a prompt fraction with a known shape
/// centered at tp.
#[derive(Debug, Clone)]
pub struct ArrivalFit {
    pub t0: f64,
    pub sigma_t0: f64,
    pub tp: f64,
    pub sigma_tp: f64,
    pub t1: f64,
    pub sigma_t1: f64,
    pub prompt_fraction: f64,
    pub amplitude: f64,
    pub background: f64,
    pub chi2: f64,
    pub dof: usize,
    pub model: Vec<f64>,
}

/// Fit a micro-time histogram. `prompt` is the prompt photon's intensity profile
/// relative to its center. Bin m holds true times near (m + 1) * bin because
/// timestamps are floored on a grid whose phase differs between periods.
pub fn fit_arrival(
    hist: &CoincidenceHistogram,
    jitter_fwhm: f64,
    prompt: &TauDensity,
    t1_guess: f64,
    resp: BinResponse,
) -> Result<ArrivalFit> {
    check_populated(hist)?;
    let nb = hist.counts.len();
    let bw = hist.bin_edges[1] - hist.bin_edges[0];
    let dt = (bw / 32.0).min(4.0);
    let gk = gaussian_kernel(jitter_fwhm, dt);
    let pr = resample(prompt, dt);
    let pr_t0 = prompt.tau0;
    let fine = Fine::new(hist, 0.5 * gk.len() as f64 * dt + 2.0 * bw, dt);
    let (y, w) = weights(hist);
    let total: f64 = y.iter().sum();
    let eval = |p: &[f64]| -> Vec<f64> {
        let (amp, wp, t0, tp, tau, bg) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        let v: Vec<f64> = (0..fine.n)
            .map(|k| {
                let x = fine.x(k);
                let dot = one_sided(x, dt, t0, tau);
                // prompt profile sampled at x - tp
                let u = (x - tp - pr_t0) / dt;
                let pv = if u >= 0.0 && u < (pr.len() - 1) as f64 {
                    let i = u.floor() as usize;
                    let f = u - i as f64;
                    (pr[i] * (1.0 - f) + pr[i + 1] * f) / dt
                } else {
                    0.0
                };
                (1.0 - wp) * dot + wp * pv
            })
            .collect();
        let v = convolve_centered(&v, &gk, (gk.len() - 1) / 2);
        let mut out = bin_density(&v, fine, hist, resp);
        out.iter_mut().for_each(|x| *x = *x * amp + bg);
        out
    };
    let centers = hist.centers();
    let mode = centers[y.iter().enumerate().fold(0, |a, (i, v)| if *v > y[a] { i } else { a })];
    let bg0 = {
        let mut s = y.clone();
        s.sort_by(|a, b| a.total_cmp(b));
        s[nb / 4]
    };
    let lo_t = hist.bin_edges[0];
    let hi_t = hist.bin_edges[nb];
    let p0 = [total, 0.5, mode - bw, mode - bw, t1_guess, bg0];
    let lo = [0.0, 0.0, lo_t, lo_t, 1.0, 0.0];
    let hi = [10.0 * total + 10.0, 1.0, hi_t, hi_t, hi_t - lo_t, total + 1.0];
    let step = [1e-3 * total.max(1.0), 1e-4, 0.05, 0.05, 0.05, 1e-3];
    // the two onsets are only weakly separated; start from a few splits
    let mut best: Option<LmOut> = None;
    for dp in [-0.5 * bw, 0.5 * bw, 1.5 * bw] {
        let mut s = p0;
        s[3] = mode - bw + dp;
        if let Ok(o) = levenberg_marquardt(&eval, &y, &w, &s, &lo, &hi, &step).and_then(|o| o.require_converged(nb)) {
            if best.as_ref().map_or(true, |b| o.chi2 < b.chi2) {
                best = Some(o);
            }
        }
    }
    let out = best.ok_or_else(|| Error::FitNonConvergence {
        iterations: MAX_ITER,
        chi2_red: f64::NAN,
        msg: "arrival fit failed from every start".into(),
    })?;
    let out = poisson_refine(&eval, &y, out, &lo, &hi, &step)?.require_converged(nb)?;
    let p = out.params.clone();
    let sd = |i: usize| out.cov[(i, i)].sqrt();
    Ok(ArrivalFit {
        t0: p[2],
        sigma_t0: sd(2),
        tp: p[3],
        sigma_tp: sd(3),
        t1: p[4],
        sigma_t1: sd(4),
        prompt_fraction: p[1],
        amplitude: p[0],
        background: p[5],
        chi2: out.chi2,
        dof: nb.saturating_sub(6),
        model: eval(&p),
    })
}

/// Inputs for the HOM peak fit besides the histograms.
#[derive(Debug, Clone)]
pub struct HomPeakModel {
    /// Signal-photon state with its delay relative to the dot onset at t = 0.
    pub pulse: TwoTimeCoherence,
    /// Ratio of the parallel run's normalization to the orthogonal run's
    /// (mean side-peak areas).
    pub parallel_scale: f64,
}

#[derive(Debug, Clone)]
pub struct HomPeakFit {
    pub t2: f64,
    pub sigma_t2: f64,
    /// Interference amplitude fitted with T2 fixed; 1 for an ideal splitter.
    pub interference: f64,
    pub sigma_interference: f64,
    /// Orthogonal-peak counts per unit model integral.
    pub amplitude_perp: f64,
    pub chi2_perp: f64,
    pub chi2_par: f64,
    pub dof_par: usize,
    /// Detector-smeared model counts at the histogram bin centers.
    pub perp_curve: HomModelCurve,
    pub par_curve: HomModelCurve,
    /// Jitter-free references, counts per bin width.
    pub perp_reference: HomModelCurve,
    pub par_reference: HomModelCurve,
}

fn smear_bin(d: &TauDensity, gk: &[f64], h: &CoincidenceHistogram) -> Vec<f64> {
    let half = (gk.len() - 1) / 2;
    let v = convolve_centered(&d.values, gk, half);
    let fine = Fine { x0: d.tau0, dt: d.dt, n: v.len() };
    bin_density(&v, fine, h, BinResponse::Triangular { offset: 0.0 })
}

/// Fit the central peaks of both polarizations. The orthogonal peak fixes the
/// amplitude; the parallel peak then fixes T2 (interference amplitude 1) and,
/// with T2 held, the interference amplitude.
pub fn fit_hom_peak(
    hist_perp: &CoincidenceHistogram,
    hist_par: &CoincidenceHistogram,
    t1: f64,
    jitter_fwhm: f64,
    model: &HomPeakModel,
) -> Result<HomPeakFit> {
    check_populated(hist_perp)?;
    check_populated(hist_par)?;
    if hist_perp.bin_edges != hist_par.bin_edges {
        return invalid("orthogonal and parallel histograms need the same bins");
    }
    if !(model.parallel_scale > 0.0) {
        return invalid("parallel scale must be positive");
    }
    let tm = DotPulseTauModel::from_state(t1, &model.pulse)?;
    let gk = gaussian_kernel(jitter_fwhm, tm.dt);
    let orth = smear_bin(&tm.orthogonal_density(), &gk, hist_perp);
    let (yp, wp) = weights(hist_perp);
    let (ya, wa) = weights(hist_par);

    let inter = |t2: f64| smear_bin(&tm.interference_density(t2), &gk, hist_par);
    let t2_lo = (0.02 * t1).max(1.0);
    let t2_hi = 2.0 * t1;
    let chi2_par_w = |wa: &[f64], a_par: f64, t2: f64| -> f64 {
        let x = inter(t2);
        (0..ya.len()).map(|i| wa[i] * (ya[i] - a_par * (orth[i] - x[i])).powi(2)).sum()
    };
    let solve = |wp: &[f64], wa: &[f64]| -> Result<(f64, f64, f64)> {
        let num: f64 = (0..yp.len()).map(|i| wp[i] * yp[i] * orth[i]).sum();
        let den: f64 = (0..yp.len()).map(|i| wp[i] * orth[i] * orth[i]).sum();
        if !(den > 0.0) {
            return invalid("model has no weight inside the histogram");
        }
        let amp = num / den;
        let a_par = amp * model.parallel_scale;
        // coarse log scan, then golden refinement around the best point
        let n = 48;
        let grid: Vec<f64> = (0..=n).map(|k| t2_lo * (t2_hi / t2_lo).powf(k as f64 / n as f64)).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| chi2_par_w(wa, a_par, t)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::FitNonConvergence { iterations: 0, chi2_red: f64::NAN, msg: "non-finite chi2 in T2 scan".into() });
        }
        let kbest = (0..vals.len()).fold(0, |a, i| if vals[i] < vals[a] { i } else { a });
        let (a, b) = (grid[kbest.saturating_sub(1)], grid[(kbest + 1).min(n)]);
        let (t2, neg) = golden_max(|t| -chi2_par_w(wa, a_par, t), a, b, 1e-3);
        Ok((amp, t2, -neg))
    };
    // Neyman start, then weights from the model as in `poisson_refine`
    let (mut wp, mut wa) = (wp, wa);
    let mut pass = 0;
    let (amp, t2, c2min) = loop {
        let (amp, t2, c2) = solve(&wp, &wa)?;
        pass += 1;
        if pass == 4 {
            break (amp, t2, c2);
        }
        let x = inter(t2);
        let a_par = amp * model.parallel_scale;
        wp = orth.iter().map(|o| 1.0 / (amp * o).max(MODEL_FLOOR)).collect();
        wa = (0..ya.len()).map(|i| 1.0 / (a_par * (orth[i] - x[i])).max(MODEL_FLOOR)).collect();
    };
    let model_perp: Vec<f64> = orth.iter().map(|x| amp * x).collect();
    let chi2_perp = chi2(&yp, &wp, &model_perp);
    let a_par = amp * model.parallel_scale;
    let chi2_par = |t2: f64| chi2_par_w(&wa, a_par, t2);
    // one-sigma interval from chi2 = min + 1
    let cross = |dir: f64| -> f64 {
        let f = |t: f64| chi2_par(t) - c2min - 1.0;
        let mut s = t2;
        let mut h = 0.01 * t2;
        for _ in 0..60 {
            let nt = (s + dir * h).clamp(t2_lo, t2_hi);
            if f(nt) > 0.0 {
                return crate::quad::bisect(f, s.min(nt), s.max(nt), 1e-3);
            }
            if nt == t2_lo || nt == t2_hi {
                return nt;
            }
            s = nt;
            h *= 1.5;
        }
        s
    };
    let sigma_t2 = 0.5 * (cross(1.0) - cross(-1.0));

    let x = inter(t2);
    let (mut sn, mut sd) = (0.0, 0.0);
    for i in 0..ya.len() {
        let g = a_par * x[i];
        sn += wa[i] * (a_par * orth[i] - ya[i]) * g;
        sd += wa[i] * g * g;
    }
    let (c, sigma_c) = if sd > 0.0 { (sn / sd, 1.0 / sd.sqrt()) } else { (0.0, f64::INFINITY) };

    let centers = hist_perp.centers();
    let comps = ModelComponents { t1, t2, amplitude: amp };
    let par_model: Vec<f64> = (0..ya.len()).map(|i| a_par * (orth[i] - x[i])).collect();
    let bw = hist_perp.bin_edges[1] - hist_perp.bin_edges[0];
    let reference = |d: TauDensity, scale: f64| HomModelCurve {
        delays: (0..d.values.len()).map(|k| d.tau(k)).collect(),
        values: d.values.iter().map(|v| v * scale * bw).collect(),
        jitter_fwhm: 0.0,
        components: Some(comps),
    };
    Ok(HomPeakFit {
        t2,
        sigma_t2,
        interference: c,
        sigma_interference: sigma_c,
        amplitude_perp: amp,
        chi2_perp,
        chi2_par: c2min,
        dof_par: ya.len().saturating_sub(1),
        perp_curve: HomModelCurve {
            delays: centers.clone(),
            values: model_perp,
            jitter_fwhm,
            components: Some(comps),
        },
        par_curve: HomModelCurve { delays: centers, values: par_model, jitter_fwhm, components: Some(comps) },
        perp_reference: reference(tm.orthogonal_density(), amp),
        par_reference: reference(tm.parallel_density(t2, 1.0), a_par),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal};

    fn hist_from(samples: impl Iterator<Item = f64>, start: f64, bin: f64, n: usize) -> CoincidenceHistogram {
        let mut h = CoincidenceHistogram::uniform(start, bin, n);
        for x in samples {
            let m = ((x - start) / bin).floor();
            if m >= 0.0 && (m as usize) < n {
                h.counts[m as usize] += 1;
            }
        }
        h
    }

    #[test]
    fn exact_two_sided_no_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Exp::new(1.0 / 328.0).unwrap();
        let s = (0..400_000).map(|_| {
            let x: f64 = e.sample(&mut rng);
            if rng.gen::<bool>() { x } else { -x }
        });
        let h = hist_from(s.collect::<Vec<_>>().into_iter(), -64.0 - 40.0 * 128.0, 128.0, 81);
        let f = fit_lifetime_with(&h, 0.0, BinResponse::Box, &LifetimeModel::TwoSided { kernel: None }).unwrap();
        assert!((f.t1 - 328.0).abs() < 3.0 * f.sigma_t1 + 0.5, "{} +- {}", f.t1, f.sigma_t1);
        assert!(f.center.abs() < 3.0);
    }

    #[test]
    fn floored_differences_with_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = Exp::new(1.0 / 328.0).unwrap();
        let g = Normal::new(0.0, 240.0 / 2.3548 / 2f64.sqrt()).unwrap();
        let b = 128.0;
        let s: Vec<f64> = (0..200_000)
            .map(|_| {
                let base = 1e5 + rng.gen::<f64>() * 1e4;
                let x: f64 = e.sample(&mut rng);
                let (t1, t2) = if rng.gen::<bool>() { (base, base + x) } else { (base + x, base) };
                let (t1, t2) = (t1 + g.sample(&mut rng), t2 + g.sample(&mut rng));
                ((t2 / b).floor() - (t1 / b).floor()) * b
            })
            .collect();
        let h = hist_from(s.into_iter(), -64.0 - 30.0 * b, b, 61);
        let f = fit_lifetime(&h, 240.0, 128.0).unwrap();
        assert!((f.t1 - 328.0).abs() < 15.0, "{} +- {}", f.t1, f.sigma_t1);
    }

    #[test]
    fn partner_kernel_recovers_lifetime() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = Exp::new(1.0 / 328.0).unwrap();
        let g = Normal::new(0.0, 240.0 / 2.3548 / 2f64.sqrt()).unwrap();
        let pulse = Normal::new(100.0, 40.0).unwrap();
        let b = 128.0;
        let s: Vec<f64> = (0..200_000)
            .map(|_| {
                let base = 1e5 + rng.gen::<f64>() * 1e4;
                let (d, p) = (base + e.sample(&mut rng), base + pulse.sample(&mut rng));
                let (t1, t2) = if rng.gen::<bool>() { (d, p) } else { (p, d) };
                let (t1, t2) = (t1 + g.sample(&mut rng), t2 + g.sample(&mut rng));
                ((t2 / b).floor() - (t1 / b).floor()) * b
            })
            .collect();
        let h = hist_from(s.into_iter(), -64.0 - 30.0 * b, b, 61);
        let kernel = TauDensity {
            tau0: -500.0,
            dt: 2.0,
            values: (0..1000).map(|k| {
                let t = -500.0 + 2.0 * k as f64 - 100.0;
                (-0.5 * t * t / 1600.0).exp()
            }).collect(),
        };
        let f = fit_lifetime_with(&h, 240.0, BinResponse::Triangular { offset: 0.0 }, &LifetimeModel::TwoSided { kernel: Some(kernel) }).unwrap();
        assert!((f.t1 - 328.0).abs() < 12.0, "{} +- {} chi2 {}", f.t1, f.sigma_t1, f.chi2);
        let plain = fit_lifetime(&h, 240.0, 128.0).unwrap();
        assert!(plain.t1 < f.t1 - 20.0);
    }

    #[test]
    fn flat_rejected() {
        let mut h = CoincidenceHistogram::uniform(0.0, 128.0, 40);
        h.counts.iter_mut().enumerate().for_each(|(i, c)| *c = 1000 + (i as u64 * 7919) % 60);
        let r = fit_lifetime(&h, 240.0, 128.0);
        assert!(matches!(r, Err(Error::FitRejected(_))), "{:?}", r.map(|f| (f.t1, f.chi2, f.center)));
        let sparse = CoincidenceHistogram { counts: vec![0, 5, 0, 3, 0, 0, 0, 0, 0, 0, 0, 0], ..CoincidenceHistogram::uniform(0.0, 128.0, 12) };
        assert!(fit_lifetime(&sparse, 240.0, 128.0).is_err());
    }

    #[test]
    fn lm_fits_a_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * x + 2.0).collect();
        let w = vec![1.0; 20];
        let f = |p: &[f64]| x.iter().map(|x| p[0] * x + p[1]).collect::<Vec<f64>>();
        let o = levenberg_marquardt(&f, &y, &w, &[1.0, 0.0], &[-10.0, -10.0], &[10.0, 10.0], &[1e-6, 1e-6]).unwrap();
        assert!((o.params[0] - 3.0).abs() < 1e-6 && (o.params[1] - 2.0).abs() < 1e-6);
    }
}
