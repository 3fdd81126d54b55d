use std::fmt::Write as _;
use std::path::Path;

use super::{
    coalescence, fit_arrival, fit_hom_peak, fit_lifetime_with, herald_select, BinResponse, LifetimeModel, ArrivalFit, CoincidenceHistogram,
    EventKind, HomPeakFit, HomPeakModel, LifetimeFit, MicroHistograms, PseudoTimeAccumulator, RepSource,
    TimeWindows,
};
use crate::error::{invalid, Result};
use crate::hom::TauDensity;
use crate::simkit::{physics_grid, signal_pulse, ExperimentConfig, TagRecord, CH_D1, CH_D2};

/// Everything one pass over a tag stream keeps. Adding two accumulations equals
/// accumulating the concatenated events, up to pseudo-time pairs that straddle
/// the join.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAccumulation {
    pub rep: u64,
    pub bin: u64,
    pub heralds: u64,
    pub herald_only: u64,
    pub doubles: u64,
    pub triples: u64,
    pub out_of_order: u64,
    pub micro: MicroHistograms,
    pub pseudo: PseudoTimeAccumulator,
}

impl RunAccumulation {
    pub fn new(rep: u64, bin: u64, side_peaks: usize) -> Result<Self> {
        Ok(Self {
            rep,
            bin,
            heralds: 0,
            herald_only: 0,
            doubles: 0,
            triples: 0,
            out_of_order: 0,
            micro: MicroHistograms::new(rep, bin)?,
            pseudo: PseudoTimeAccumulator::new(rep, bin, side_peaks)?,
        })
    }

    pub fn push(&mut self, e: &super::HeraldedEvent) {
        self.heralds += 1;
        match e.kind {
            EventKind::HeraldOnly => self.herald_only += 1,
            EventKind::Double => self.doubles += 1,
            EventKind::Triple => self.triples += 1,
        }
        self.micro.push(e);
        self.pseudo.push(e);
    }

    pub fn add(&mut self, o: &RunAccumulation) -> Result<()> {
        if (self.rep, self.bin) != (o.rep, o.bin) {
            return invalid("runs with different period or bin");
        }
        self.heralds += o.heralds;
        self.herald_only += o.herald_only;
        self.doubles += o.doubles;
        self.triples += o.triples;
        self.out_of_order += o.out_of_order;
        self.micro.add(&o.micro)?;
        self.pseudo.add(&o.pseudo)
    }
}

/// Single pass over a stream.
pub fn analyze_stream<I>(stream: I, source: RepSource, bin: u64, side_peaks: usize) -> Result<RunAccumulation>
where
    I: IntoIterator<Item = Result<TagRecord>>,
{
    let mut sel = herald_select(stream, source);
    let mut acc: Option<RunAccumulation> = None;
    while let Some(e) = sel.next() {
        let e = e?;
        let a = match &mut acc {
            Some(a) => a,
            None => acc.insert(RunAccumulation::new(sel.rep_period(), bin, side_peaks)?),
        };
        a.push(&e);
    }
    let mut acc = match acc {
        Some(a) => a,
        None => {
            let rep = match (sel.rep_period(), source) {
                (0, RepSource::Known(r)) => r,
                (r, _) => r,
            };
            if rep == 0 {
                return invalid("empty stream without a repetition period");
            }
            RunAccumulation::new(rep, bin, side_peaks)?
        }
    };
    acc.out_of_order = sel.out_of_order();
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowChoice {
    /// `bins` micro bins per detector starting at the bin holding the fitted onset.
    AfterArrival { bins: usize },
    Explicit(TimeWindows),
}

/// Model assumptions and settings for [`analyze_pair`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Detector jitter (per detector), signal filter and source, lifetime guess.
    pub physics: ExperimentConfig,
    pub side_peaks: usize,
    pub window: WindowChoice,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { physics: ExperimentConfig::default(), side_peaks: 6, window: WindowChoice::AfterArrival { bins: 3 } }
    }
}

/// Results of the orthogonal/parallel pair, plus the curves behind them.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub a_perp: u64,
    pub a_par: u64,
    pub p_c: f64,
    pub sigma_p_c: f64,
    pub a_perp_filtered: u64,
    pub a_par_filtered: u64,
    pub p_c_filtered: f64,
    pub sigma_p_c_filtered: f64,
    /// Kept fraction of orthogonal same-period triples.
    pub selection_efficiency: f64,
    pub selection_efficiency_par: f64,
    pub windows: TimeWindows,
    pub side_mean_perp: (f64, f64),
    pub side_mean_par: (f64, f64),
    pub lifetime: LifetimeFit,
    pub hom: HomPeakFit,
    pub arrival_d1: ArrivalFit,
    pub arrival_d2: ArrivalFit,
    /// Signal pulse center relative to the dot onset, from the arrival fits.
    pub pulse_delay: f64,
    pub perp: RunAccumulation,
    pub par: RunAccumulation,
    pub options: AnalysisOptions,
}

fn prompt_profile(cfg: &ExperimentConfig) -> Result<TauDensity> {
    let grid = physics_grid(cfg)?;
    let s = signal_pulse(cfg, grid, 0.0)?;
    Ok(TauDensity { tau0: grid.t0, dt: grid.dt, values: s.diagonal() })
}

/// Full analysis of one orthogonal and one parallel run.
pub fn analyze_pair(
    perp: &RunAccumulation,
    par: &RunAccumulation,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    if (perp.rep, perp.bin) != (par.rep, par.bin) {
        return invalid("runs with different period or bin");
    }
    let cfg = &opts.physics;
    let bin = perp.bin;
    let prompt = prompt_profile(cfg)?;
    let mut micro = perp.micro.clone();
    micro.add(&par.micro)?;
    let resp = BinResponse::micro(perp.rep, bin);
    let arrival_d1 = fit_arrival(&micro.singles(CH_D1), cfg.jitter_fwhm, &prompt, cfg.t1, resp)?;
    let arrival_d2 = fit_arrival(&micro.singles(CH_D2), cfg.jitter_fwhm, &prompt, cfg.t1, resp)?;
    let pulse_delay = 0.5 * ((arrival_d1.tp - arrival_d1.t0) + (arrival_d2.tp - arrival_d2.t0));

    let nb = perp.rep.div_ceil(bin) as usize;
    let windows = match &opts.window {
        WindowChoice::Explicit(w) => {
            if w.d1.end > nb || w.d2.end > nb {
                return invalid("time window extends past the period");
            }
            w.clone()
        }
        WindowChoice::AfterArrival { bins } => {
            let s1 = (arrival_d1.t0 / bin as f64).floor().max(0.0) as usize;
            let s2 = (arrival_d2.t0 / bin as f64).floor().max(0.0) as usize;
            TimeWindows::new(s1..(s1 + bins).min(nb), s2..(s2 + bins).min(nb), bin)?
        }
    };

    let a_perp = perp.pseudo.central_area();
    let a_par = par.pseudo.central_area();
    let (p_c, sigma_p_c) = coalescence(a_perp as f64, a_par as f64)?;
    let a_perp_f = perp.pseudo.windowed_central(&windows);
    let a_par_f = par.pseudo.windowed_central(&windows);
    let (p_c_f, sigma_p_c_f) = coalescence(a_perp_f as f64, a_par_f as f64)?;
    let eff = a_perp_f as f64 / a_perp as f64;
    let eff_par = if a_par > 0 { a_par_f as f64 / a_par as f64 } else { f64::NAN };

    let full = TimeWindows::full(perp.rep, bin)?;
    let h_perp = perp.pseudo.central_tau_histogram(&full);
    let h_par = par.pseudo.central_tau_histogram(&full);
    let combined_jitter = cfg.jitter_fwhm * std::f64::consts::SQRT_2;
    let partner = TauDensity { tau0: prompt.tau0 + pulse_delay, ..prompt.clone() };
    let lifetime = fit_lifetime_with(
        &h_perp,
        combined_jitter,
        BinResponse::Triangular { offset: 0.0 },
        &LifetimeModel::TwoSided { kernel: Some(partner) },
    )?;

    let side_perp = perp.pseudo.side_mean();
    let side_par = par.pseudo.side_mean();
    let scale = if side_perp.0 > 0.0 && side_par.0 > 0.0 { side_par.0 / side_perp.0 } else { 1.0 };
    let hcfg = ExperimentConfig { t1: lifetime.t1, t2: lifetime.t1, ..cfg.clone() };
    let grid = physics_grid(&hcfg)?;
    let pulse = signal_pulse(&hcfg, grid, pulse_delay)?;
    let hom = fit_hom_peak(
        &h_perp,
        &h_par,
        lifetime.t1,
        combined_jitter,
        &HomPeakModel { pulse, parallel_scale: scale },
    )?;

    Ok(AnalysisReport {
        a_perp,
        a_par,
        p_c,
        sigma_p_c,
        a_perp_filtered: a_perp_f,
        a_par_filtered: a_par_f,
        p_c_filtered: p_c_f,
        sigma_p_c_filtered: sigma_p_c_f,
        selection_efficiency: eff,
        selection_efficiency_par: eff_par,
        windows,
        side_mean_perp: side_perp,
        side_mean_par: side_par,
        lifetime,
        hom,
        arrival_d1,
        arrival_d2,
        pulse_delay,
        perp: perp.clone(),
        par: par.clone(),
        options: opts.clone(),
    })
}

impl AnalysisReport {
    /// Central-to-mean-side area ratio and its Poisson error.
    pub fn peak_ratio(run: &RunAccumulation) -> (f64, f64) {
        let c = run.pseudo.central_area() as f64;
        let (s, ss) = run.pseudo.side_mean();
        let r = c / s;
        (r, r * ((1.0 / c.max(1.0)) + (ss / s).powi(2)).sqrt())
    }

    /// `key=value` lines; the effective configuration follows under `config.`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("A_perp", self.a_perp.to_string());
        kv("A_par", self.a_par.to_string());
        kv("P_C", format!("{:.4}", self.p_c));
        kv("sigma_P_C", format!("{:.4}", self.sigma_p_c));
        kv("A_perp_filtered", self.a_perp_filtered.to_string());
        kv("A_par_filtered", self.a_par_filtered.to_string());
        kv("P_C_filtered", format!("{:.4}", self.p_c_filtered));
        kv("sigma_P_C_filtered", format!("{:.4}", self.sigma_p_c_filtered));
        kv("T1_ps", format!("{:.1}", self.lifetime.t1));
        kv("sigma_T1_ps", format!("{:.1}", self.lifetime.sigma_t1));
        kv("T2_ps", format!("{:.1}", self.hom.t2));
        kv("sigma_T2_ps", format!("{:.1}", self.hom.sigma_t2));
        kv("interference_amplitude", format!("{:.3}", self.hom.interference));
        kv("sigma_interference_amplitude", format!("{:.3}", self.hom.sigma_interference));
        kv("selection_efficiency", format!("{:.4}", self.selection_efficiency));
        kv("selection_efficiency_par", format!("{:.4}", self.selection_efficiency_par));
        kv("window_d1_bins", format!("{}..{}", self.windows.d1.start, self.windows.d1.end));
        kv("window_d2_bins", format!("{}..{}", self.windows.d2.start, self.windows.d2.end));
        kv("onset_d1_ps", format!("{:.1}", self.arrival_d1.t0));
        kv("onset_d2_ps", format!("{:.1}", self.arrival_d2.t0));
        kv("pulse_delay_ps", format!("{:.1}", self.pulse_delay));
        kv("side_mean_perp", format!("{:.2}", self.side_mean_perp.0));
        kv("side_mean_par", format!("{:.2}", self.side_mean_par.0));
        let (r, e) = Self::peak_ratio(&self.perp);
        kv("central_to_side_perp", format!("{r:.4}"));
        kv("sigma_central_to_side_perp", format!("{e:.4}"));
        for (tag, run) in [("perp", &self.perp), ("par", &self.par)] {
            kv(&format!("heralds_{tag}"), run.heralds.to_string());
            kv(&format!("doubles_{tag}"), run.doubles.to_string());
            kv(&format!("triples_{tag}"), run.triples.to_string());
        }
        kv("side_peaks", self.options.side_peaks.to_string());
        for line in self.options.physics.to_config_string().lines() {
            let _ = writeln!(s, "config.{line}");
        }
        s
    }

    /// Histograms and model curves as CSV files in `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
        self.perp.micro.write_csv(create("micro_perp.csv")?)?;
        self.par.micro.write_csv(create("micro_par.csv")?)?;
        self.perp.pseudo.histogram().write_csv(create("pseudo_time_perp.csv")?)?;
        self.par.pseudo.histogram().write_csv(create("pseudo_time_par.csv")?)?;
        let full = TimeWindows::full(self.perp.rep, self.perp.bin)?;
        let pairs: [(&str, &RunAccumulation, &TimeWindows); 4] = [
            ("central_perp.csv", &self.perp, &full),
            ("central_par.csv", &self.par, &full),
            ("central_perp_filtered.csv", &self.perp, &self.windows),
            ("central_par_filtered.csv", &self.par, &self.windows),
        ];
        for (name, run, w) in pairs {
            run.pseudo.central_tau_histogram(w).write_csv(create(name)?)?;
        }
        self.hom.perp_curve.write_csv(create("model_perp.csv")?, "tau_ps")?;
        self.hom.par_curve.write_csv(create("model_par.csv")?, "tau_ps")?;
        self.hom.perp_reference.write_csv(create("reference_perp.csv")?, "tau_ps")?;
        self.hom.par_reference.write_csv(create("reference_par.csv")?, "tau_ps")?;
        Ok(())
    }
}

/// Peak-area histogram of the central peak restricted to `w` (convenience for
/// callers holding only an accumulation).
pub fn central_histogram(run: &RunAccumulation, w: &TimeWindows) -> CoincidenceHistogram {
    run.pseudo.central_tau_histogram(w)
}
