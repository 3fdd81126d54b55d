//! Monte Carlo time-tag generation for the heralded two-photon interference
//! experiment: a herald detector, two splitter-output detectors and a laser sync.

mod config;
mod tags;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use rayon::prelude::*;

use crate::coherence::{filter_amplitude_response, qd_coherence, SpectralFilter, TwoTimeCoherence};
use crate::error::{Error, Result};
use crate::grid::{FreqGrid, TimeGrid};
use crate::hom::{coincidence_density_with_splitter, CoincidenceDensity};
use crate::spdc::{build_jsa, heralded_signal_state, HeraldingCalibration, PhasematchParams};

pub use config::ExperimentConfig;
pub use tags::{read_tags, write_tags, TagHeader, TagReader, TagRecord, CH_D1, CH_D2, CH_HERALD, CH_SYNC};

/// Laser periods per RNG substream. Fixed, so output never depends on how the
/// work is split across threads.
pub const CHUNK_PERIODS: u64 = 1 << 16;

const FWHM_TO_SIGMA: f64 = 0.42466090014400953;

/// Walker alias table over a nonnegative weight vector.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f32>,
    alias: Vec<u32>,
    total: f64,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 || n > u32::MAX as usize {
            return Err(Error::Sampling("alias table needs 1..2^32 weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Sampling(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Sampling("all weights are zero".into()));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0f32; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s] as f32;
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        Ok(Self { prob, alias, total })
    }

    /// Sum of the weights the table was built from.
    pub fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.gen::<f64>() * self.prob.len() as f64;
        let i = (u as usize).min(self.prob.len() - 1);
        if ((u - i as f64) as f32) < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// Detection times of one photon pair behind the splitter, ps on the density's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub t1: f64,
    pub t2: f64,
    /// Both photons left through one port; only one detector can click.
    pub same_port: bool,
}

/// Draws pair detection times from a [`CoincidenceDensity`]. Cells are chosen by
/// alias sampling and times placed uniformly within the cell.
#[derive(Debug, Clone)]
pub struct PairSampler {
    grid: TimeGrid,
    split: AliasTable,
    bunched: Option<AliasTable>,
    p_split: f64,
}

impl PairSampler {
    pub fn new(density: &CoincidenceDensity) -> Result<Self> {
        let n = density.grid.n;
        if density.values.len() != n * n || density.bunched.len() != n * n {
            return Err(Error::Sampling("density arrays do not match the grid".into()));
        }
        let a = density.integral();
        let b = density.bunched_integral();
        if !((a + b - 1.0).abs() < 1e-4) {
            return Err(Error::Sampling(format!("density is not normalized (total {:.6})", a + b)));
        }
        let split = AliasTable::new(&density.values)?;
        let bunched = if b > 0.0 { Some(AliasTable::new(&density.bunched)?) } else { None };
        Ok(Self { grid: density.grid, split, bunched, p_split: a / (a + b) })
    }

    /// Probability that the photons leave through different ports.
    pub fn split_probability(&self) -> f64 {
        self.p_split
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PairSample {
        let same_port = rng.gen::<f64>() >= self.p_split;
        let table = match (&self.bunched, same_port) {
            (Some(b), true) => b,
            _ => &self.split,
        };
        let k = table.sample(rng);
        let n = self.grid.n;
        let (i, j) = (k / n, k % n);
        let t1 = self.grid.t(i) + (rng.gen::<f64>() - 0.5) * self.grid.dt;
        let t2 = self.grid.t(j) + (rng.gen::<f64>() - 0.5) * self.grid.dt;
        PairSample { t1, t2, same_port: same_port && self.bunched.is_some() }
    }
}

/// One draw from `density`. Builds the sampler each call; keep a [`PairSampler`]
/// for repeated draws.
pub fn sample_pair_times<R: Rng + ?Sized>(density: &CoincidenceDensity, rng: &mut R) -> Result<PairSample> {
    Ok(PairSampler::new(density)?.sample(rng))
}

/// Arrival-time sampler for a photon that meets the splitter alone.
#[derive(Debug, Clone)]
struct SingleSampler {
    grid: TimeGrid,
    table: AliasTable,
}

impl SingleSampler {
    fn new(state: &TwoTimeCoherence) -> Result<Self> {
        let d: Vec<f64> = state.diagonal().into_iter().map(|x| x.max(0.0)).collect();
        Ok(Self { grid: state.grid(), table: AliasTable::new(&d)? })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = self.table.sample(rng);
        self.grid.t(i) + (rng.gen::<f64>() - 0.5) * self.grid.dt
    }
}

/// Sampling grid for the photon states: dot onset at t = 0, room for the signal
/// pulse's tails before it and 16 lifetimes after.
pub fn physics_grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    let tl = crate::coherence::transform_limit(cfg.spdc_filter_fwhm, cfg.spdc_filter_shape)?;
    let lead = (10.0 * tl).max(1000.0) + cfg.spdc_delay.min(0.0).abs();
    let tail = (16.0 * cfg.t1).max(cfg.spdc_delay + 10.0 * tl);
    TimeGrid::covering(-lead, tail, cfg.grid_dt)
}

/// Filtered signal photon centered at `delay` on `grid`: the heralded state of the
/// default pair source when `spdc_pump_duration > 0`, else the filter's
/// transform-limited response.
pub fn signal_pulse(cfg: &ExperimentConfig, grid: TimeGrid, delay: f64) -> Result<TwoTimeCoherence> {
    let filter = SpectralFilter::new(cfg.spdc_filter_shape, cfg.spdc_filter_fwhm)?;
    // built centered on t = 0 of a shifted grid, then relabeled
    let shifted = TimeGrid::new(grid.t0 - delay, grid.dt, grid.n)?;
    let state = if cfg.spdc_pump_duration > 0.0 {
        let fg = FreqGrid::symmetric(800.0, 2.5)?;
        let jsa = build_jsa(cfg.spdc_pump_duration, PhasematchParams::default(), fg, fg)?;
        heralded_signal_state(&jsa, Some(&filter), None, shifted, &HeraldingCalibration::default())?.state
    } else {
        filter_amplitude_response(&filter, shifted)?.to_coherence()
    };
    state.relabeled(grid)
}

/// Photon states and samplers derived once from a config. Times are relative to
/// the dot's emission onset.
#[derive(Debug, Clone)]
pub struct PhysicsModel {
    pub grid: TimeGrid,
    pub dot: TwoTimeCoherence,
    pub spdc: TwoTimeCoherence,
    pub density: CoincidenceDensity,
    pairs: PairSampler,
    dot_alone: SingleSampler,
    spdc_alone: SingleSampler,
}

impl PhysicsModel {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = physics_grid(cfg)?;
        let dot = qd_coherence(cfg.t1, cfg.t2, grid)?;
        let spdc = signal_pulse(cfg, grid, cfg.spdc_delay)?;
        let density = coincidence_density_with_splitter(&dot, &spdc, cfg.polarization, 0.0, cfg.bs_reflectivity)?;
        let pairs = PairSampler::new(&density)?;
        let dot_alone = SingleSampler::new(&dot)?;
        let spdc_alone = SingleSampler::new(&spdc)?;
        Ok(Self { grid, dot, spdc, density, pairs, dot_alone, spdc_alone })
    }

    pub fn pair_sampler(&self) -> &PairSampler {
        &self.pairs
    }
}

struct Generator {
    cfg: ExperimentConfig,
    model: PhysicsModel,
    n_periods: u64,
    rep: f64,
    bin: u64,
}

impl Generator {
    fn n_chunks(&self) -> u64 {
        self.n_periods.div_ceil(CHUNK_PERIODS)
    }

    fn chunk_bounds(&self, c: u64) -> (u64, u64) {
        let p0 = c * CHUNK_PERIODS;
        (p0, (p0 + CHUNK_PERIODS).min(self.n_periods))
    }

    /// Smallest timestamp any later chunk can produce.
    fn chunk_end_ts(&self, c: u64) -> u64 {
        let (_, p1) = self.chunk_bounds(c);
        self.floor_ts(p1 as f64 * self.rep)
    }

    #[inline]
    fn floor_ts(&self, t: f64) -> u64 {
        (t / self.bin as f64).floor() as u64 * self.bin
    }

    fn chunk(&self, c: u64) -> Vec<TagRecord> {
        let cfg = &self.cfg;
        let (p0, p1) = self.chunk_bounds(c);
        let start = p0 as f64 * self.rep;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c);
        let mut out = Vec::new();
        let stamp = |t: f64| -> u64 { self.floor_ts(t.max(start)) };

        let dec = cfg.sync_decimation;
        let mut k = p0.div_ceil(dec) * dec;
        while k < p1 {
            out.push(TagRecord::new(CH_SYNC, self.floor_ts(k as f64 * self.rep)));
            k += dec;
        }

        let jitter = Normal::new(0.0, cfg.jitter_fwhm * FWHM_TO_SIGMA).expect("validated jitter");
        if cfg.herald_prob_per_pulse > 0.0 {
            let skip = Geometric::new(cfg.herald_prob_per_pulse).expect("validated probability");
            let r = cfg.bs_reflectivity;
            let mut k = p0.saturating_add(skip.sample(&mut rng));
            while k < p1 {
                let base = k as f64 * self.rep;
                out.push(TagRecord::new(CH_HERALD, stamp(base + cfg.herald_offset + jitter.sample(&mut rng))));
                let emit = base + cfg.emission_offset;
                let spdc = rng.gen::<f64>() < cfg.spdc_survival;
                let dot = rng.gen::<f64>() < cfg.qd_click_prob;
                match (spdc, dot) {
                    (true, true) => {
                        let s = self.model.pairs.sample(&mut rng);
                        if s.same_port {
                            let ch = if rng.gen::<f64>() < 0.5 { CH_D1 } else { CH_D2 };
                            let t = emit + s.t1.min(s.t2) + jitter.sample(&mut rng);
                            out.push(TagRecord::new(ch, stamp(t)));
                        } else {
                            out.push(TagRecord::new(CH_D1, stamp(emit + s.t1 + jitter.sample(&mut rng))));
                            out.push(TagRecord::new(CH_D2, stamp(emit + s.t2 + jitter.sample(&mut rng))));
                        }
                    }
                    (false, true) => {
                        let t = self.model.dot_alone.sample(&mut rng);
                        let ch = if rng.gen::<f64>() < r { CH_D1 } else { CH_D2 };
                        out.push(TagRecord::new(ch, stamp(emit + t + jitter.sample(&mut rng))));
                    }
                    (true, false) => {
                        let t = self.model.spdc_alone.sample(&mut rng);
                        let ch = if rng.gen::<f64>() < 1.0 - r { CH_D1 } else { CH_D2 };
                        out.push(TagRecord::new(ch, stamp(emit + t + jitter.sample(&mut rng))));
                    }
                    (false, false) => {}
                }
                k = k.saturating_add(1).saturating_add(skip.sample(&mut rng));
            }
        }

        if cfg.background_rate > 0.0 {
            let span = (p1 - p0) as f64 * self.rep;
            let mean = cfg.background_rate * span * 1e-12;
            let pois = Poisson::new(mean).expect("validated rate");
            for ch in [CH_D1, CH_D2] {
                let n = pois.sample(&mut rng) as u64;
                for _ in 0..n {
                    out.push(TagRecord::new(ch, stamp(start + rng.gen::<f64>() * span)));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Time-ordered tag stream of a simulated run. Chunks are generated in parallel
/// batches and merged; the output depends only on the config.
pub struct SimulatedRun {
    gen: Arc<Generator>,
    next_chunk: u64,
    pending: VecDeque<(u64, Vec<TagRecord>)>,
    ready: std::vec::IntoIter<TagRecord>,
    carry: Vec<TagRecord>,
}

impl SimulatedRun {
    pub fn header(&self) -> TagHeader {
        TagHeader { rep_ps: self.gen.cfg.rep_ps(), bin_ps: self.gen.bin }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.gen.cfg
    }

    pub fn model(&self) -> &PhysicsModel {
        &self.gen.model
    }

    fn refill(&mut self) -> bool {
        if self.pending.is_empty() {
            let total = self.gen.n_chunks();
            if self.next_chunk >= total {
                if self.carry.is_empty() {
                    return false;
                }
                self.ready = std::mem::take(&mut self.carry).into_iter();
                return true;
            }
            let batch = (4 * rayon::current_num_threads() as u64).clamp(4, 256);
            let end = (self.next_chunk + batch).min(total);
            let g = &self.gen;
            let chunks: Vec<(u64, Vec<TagRecord>)> =
                (self.next_chunk..end).into_par_iter().map(|c| (c, g.chunk(c))).collect();
            self.pending.extend(chunks);
            self.next_chunk = end;
        }
        let (c, recs) = self.pending.pop_front().expect("non-empty");
        let mut merged = std::mem::take(&mut self.carry);
        merged.extend(recs);
        merged.sort_unstable();
        let last = c + 1 == self.gen.n_chunks();
        let cut = if last { merged.len() } else { merged.partition_point(|r| r.timestamp < self.gen.chunk_end_ts(c)) };
        self.carry = merged.split_off(cut);
        self.ready = merged.into_iter();
        true
    }
}

impl Iterator for SimulatedRun {
    type Item = TagRecord;

    fn next(&mut self) -> Option<TagRecord> {
        loop {
            if let Some(r) = self.ready.next() {
                return Some(r);
            }
            if !self.refill() {
                return None;
            }
        }
    }
}

/// Start a simulated run. The physics model is built up front; tags are produced
/// lazily.
pub fn simulate_run(config: &ExperimentConfig) -> Result<SimulatedRun> {
    let model = PhysicsModel::new(config)?;
    simulate_with_model(config, model)
}

/// As [`simulate_run`] with a prebuilt model (shared between runs that differ only
/// in seed or duration).
pub fn simulate_with_model(config: &ExperimentConfig, model: PhysicsModel) -> Result<SimulatedRun> {
    config.validate()?;
    let gen = Generator {
        cfg: config.clone(),
        model,
        n_periods: config.n_periods(),
        rep: config.rep_period,
        bin: config.bin_ps(),
    };
    Ok(SimulatedRun {
        gen: Arc::new(gen),
        next_chunk: 0,
        pending: VecDeque::new(),
        ready: Vec::new().into_iter(),
        carry: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alias_matches_weights() {
        let w = [1.0, 0.0, 3.0, 6.0];
        let t = AliasTable::new(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = [0usize; 4];
        let n = 200_000;
        for _ in 0..n {
            c[t.sample(&mut rng)] += 1;
        }
        assert_eq!(c[1], 0);
        for k in [0, 2, 3] {
            let p = w[k] / 10.0;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c[k] as f64 - n as f64 * p).abs() < 5.0 * sd);
        }
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[1.0, -1.0]).is_err());
    }

    fn short() -> ExperimentConfig {
        ExperimentConfig { duration: 2e-3, herald_prob_per_pulse: 0.2, spdc_survival: 0.5, qd_click_prob: 0.5, ..Default::default() }
    }

    #[test]
    fn stream_is_sorted_and_binned() {
        let cfg = ExperimentConfig { background_rate: 1e6, ..short() };
        let recs: Vec<TagRecord> = simulate_run(&cfg).unwrap().collect();
        assert!(recs.len() > 1000);
        assert!(recs.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert!(recs.iter().all(|r| r.timestamp % 128 == 0 && r.channel <= 3));
    }

    #[test]
    fn deterministic() {
        let cfg = short();
        let a: Vec<TagRecord> = simulate_run(&cfg).unwrap().collect();
        let b: Vec<TagRecord> = simulate_run(&cfg).unwrap().collect();
        assert_eq!(a, b);
        let c: Vec<TagRecord> = simulate_run(&ExperimentConfig { seed: 2, ..cfg }).unwrap().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn no_dot_no_signal_clicks_beyond_spdc() {
        let cfg = ExperimentConfig { qd_click_prob: 0.0, spdc_survival: 0.0, ..short() };
        let recs: Vec<TagRecord> = simulate_run(&cfg).unwrap().collect();
        assert!(recs.iter().all(|r| r.channel == CH_HERALD || r.channel == CH_SYNC));
    }
}
