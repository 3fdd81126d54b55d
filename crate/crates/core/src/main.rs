use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_hom::cli::{
    apply_overrides, cmd_analyze, cmd_simulate, cmd_spectra, cmd_theory, reproduce_table1, ScenarioPreset,
    SpectraParams, TableOptions,
};
use hybrid_hom::coherence::{FilterShape, SpectralFilter};
use hybrid_hom::hom::Polarization;
use hybrid_hom::simkit::ExperimentConfig;
use hybrid_hom::spdc::PmBranch;
use hybrid_hom::tagproc::{AnalysisOptions, WindowChoice};
use hybrid_hom::Result;

#[derive(Parser)]
#[command(name = "hybrid-hom", version, about = "Quantum-dot / SPDC two-photon interference: theory, simulation, analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Maximum coalescence for a filter scenario.
    Theory(TheoryArgs),
    /// Write a simulated time-tag file.
    Simulate(SimulateArgs),
    /// Analyze an orthogonal and a parallel tag file.
    Analyze(AnalyzeArgs),
    /// Joint spectrum, marginals and signal-idler dip curves as CSV.
    Spectra(SpectraArgs),
    /// Theory for all presets plus a simulated pulse-stretcher measurement.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(TableArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// fbg30, stretcher7p7, polyakov0p9 or custom
    #[arg(long, default_value = "stretcher7p7")]
    preset: String,
    #[arg(long)]
    filter_shape: Option<FilterShape>,
    /// GHz
    #[arg(long)]
    filter_fwhm: Option<f64>,
    /// GHz
    #[arg(long)]
    qd_linewidth: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    pump_duration: Option<f64>,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set duration=20 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        apply_overrides(&mut cfg, &self.sets)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    polarization: Option<Polarization>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds of acquisition.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Orthogonal-polarization tag file.
    perp: PathBuf,
    /// Parallel-polarization tag file.
    par: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Micro bins per detector kept by the time filter.
    #[arg(long, default_value_t = 3)]
    window_bins: usize,
    #[arg(long, default_value_t = 6)]
    side_peaks: usize,
    /// Directory for histogram and fit CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SpectraArgs {
    /// ps
    #[arg(long, default_value_t = 10.0)]
    pump_duration: f64,
    #[arg(long, default_value = "gaussian")]
    filter_shape: FilterShape,
    /// GHz
    #[arg(long, default_value_t = 30.0)]
    filter_fwhm: f64,
    /// Phase-matching FWHM, GHz.
    #[arg(long)]
    pm_bandwidth: Option<f64>,
    #[arg(long)]
    asymmetry: Option<f64>,
    /// same or opposite
    #[arg(long)]
    branch: Option<PmBranch>,
    #[arg(long, default_value = "spectra")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds per polarization.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 3)]
    window_bins: usize,
    /// Keep the simulated tag files here.
    #[arg(long)]
    tag_dir: Option<PathBuf>,
}

fn theory(a: TheoryArgs) -> Result<()> {
    let mut p = if a.preset == "custom" {
        ScenarioPreset { name: "custom".into(), ..ScenarioPreset::named("stretcher7p7")? }
    } else {
        ScenarioPreset::named(&a.preset)?
    };
    if let Some(v) = a.filter_shape {
        p.filter_shape = v;
    }
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut p.filter_fwhm, a.filter_fwhm);
    set(&mut p.qd_linewidth, a.qd_linewidth);
    set(&mut p.t1, a.t1);
    set(&mut p.t2, a.t2);
    set(&mut p.pump_duration, a.pump_duration);
    let r = cmd_theory(&p)?;
    print!("{}", r.to_key_values());
    if let Some(path) = a.csv {
        r.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if let Some(p) = a.polarization {
        cfg.polarization = p;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    cfg.validate()?;
    print!("{}", cfg.to_config_string());
    let n = cmd_simulate(&cfg, &a.out)?;
    println!("# wrote {n} records to {} (seed {})", a.out.display(), cfg.seed);
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let opts = AnalysisOptions {
        physics: a.cfg.load()?,
        side_peaks: a.side_peaks,
        window: WindowChoice::AfterArrival { bins: a.window_bins },
    };
    let r = cmd_analyze(&a.perp, &a.par, &opts)?;
    print!("{}", r.to_key_values());
    if let Some(dir) = a.out_dir {
        r.write_csvs(&dir)?;
    }
    Ok(())
}

fn spectra(a: SpectraArgs) -> Result<()> {
    let mut p = SpectraParams {
        pump_duration: a.pump_duration,
        filter: SpectralFilter::new(a.filter_shape, a.filter_fwhm)?,
        ..Default::default()
    };
    if let Some(v) = a.pm_bandwidth {
        p.phasematch.pm_bandwidth = v;
    }
    if let Some(v) = a.asymmetry {
        p.phasematch.asymmetry = v;
    }
    if let Some(v) = a.branch {
        p.phasematch.branch = v;
    }
    let r = cmd_spectra(&p)?;
    print!("{}", r.to_key_values());
    r.write_csvs(&a.out_dir, &p.filter)
}

fn table(a: TableArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    let t = reproduce_table1(&TableOptions { physics: cfg.clone(), window_bins: a.window_bins, tag_dir: a.tag_dir })?;
    print!("{}", t.render());
    println!("# simulated column: {} s per polarization, seed {}", cfg.duration, cfg.seed);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Theory(a) => theory(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Analyze(a) => analyze(a),
        Cmd::Spectra(a) => spectra(a),
        Cmd::ReproduceTable1(a) => table(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
