//! Presets and the commands behind the `hybrid-hom` binary. Each command returns
//! its report as text so the binary only handles arguments, files and exit codes.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coherence::{transform_limit, FilterShape, SpectralFilter, TemporalAmplitude};
use crate::error::{invalid, Error, Result};
use crate::grid::FreqGrid;
use crate::hom::{hom_dip_curve, max_theoretical_coalescence, theory_grid, Dephasing, DipCurve, Polarization, TheoryBound};
use crate::simkit::{read_tags, simulate_run, write_tags, ExperimentConfig};
use crate::spdc::{
    build_jsa, filtered_marginal, marginal_spectrum, spectral_transmission, write_marginal_csv, Arm,
    JointSpectralAmplitude, PhasematchParams,
};
use crate::tagproc::{analyze_pair, analyze_stream, AnalysisOptions, AnalysisReport, RepSource, RunAccumulation, WindowChoice};

/// One filter scenario: the SPDC filter, the dot and the pump.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: String,
    pub filter_shape: FilterShape,
    /// GHz
    pub filter_fwhm: f64,
    /// GHz
    pub qd_linewidth: f64,
    /// ps
    pub t1: f64,
    /// ps
    pub t2: f64,
    /// ps
    pub pump_duration: f64,
}

impl ScenarioPreset {
    pub const NAMES: [&'static str; 3] = ["fbg30", "stretcher7p7", "polyakov0p9"];

    pub fn named(name: &str) -> Result<Self> {
        let p = |shape, fwhm, lw, t1, t2| ScenarioPreset {
            name: name.to_string(),
            filter_shape: shape,
            filter_fwhm: fwhm,
            qd_linewidth: lw,
            t1,
            t2,
            pump_duration: 10.0,
        };
        match name {
            "fbg30" => Ok(p(FilterShape::GaussianGrating, 30.0, 1.2, 328.0, 216.0)),
            "stretcher7p7" => Ok(p(FilterShape::RectSlit, 7.7, 1.2, 328.0, 216.0)),
            "polyakov0p9" => Ok(p(FilterShape::LorentzianCavity, 0.9, 1.1, 824.0, 289.0)),
            _ => invalid(format!("unknown preset `{name}` (fbg30, stretcher7p7, polyakov0p9, custom)")),
        }
    }

    pub fn all() -> Vec<Self> {
        Self::NAMES.iter().map(|n| Self::named(n).unwrap()).collect()
    }

    pub fn filter(&self) -> Result<SpectralFilter> {
        SpectralFilter::new(self.filter_shape, self.filter_fwhm)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter()?;
        if !(self.qd_linewidth > 0.0 && self.t1 > 0.0 && self.t2 > 0.0 && self.pump_duration > 0.0) {
            return invalid("linewidth, T1, T2 and pump duration must be positive");
        }
        if self.t2 > 2.0 * self.t1 * (1.0 + 1e-12) {
            return invalid(format!("T2 = {} exceeds 2 T1 = {}", self.t2, 2.0 * self.t1));
        }
        Ok(())
    }
}

/// Signal/idler grid used by every command.
pub fn spectral_grid() -> Result<FreqGrid> {
    FreqGrid::symmetric(800.0, 2.5)
}

fn default_jsa(pump: f64) -> Result<JointSpectralAmplitude> {
    let g = spectral_grid()?;
    build_jsa(pump, PhasematchParams::default(), g, g)
}

#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub preset: ScenarioPreset,
    /// Transform-limited pulse behind the filter, ps.
    pub transform_limit: f64,
    /// Intensity FWHM of the unfiltered signal pulse, ps.
    pub input_pulse: f64,
    /// Heralded signal transmission through the filter.
    pub spectral_transmission: f64,
    pub dephasing_free: TheoryBound,
    pub with_dephasing: TheoryBound,
}

/// Both coalescence bounds for a preset. The unfiltered signal photon is taken as
/// the transform-limited Gaussian pulse of the heralded signal bandwidth.
pub fn cmd_theory(p: &ScenarioPreset) -> Result<TheoryReport> {
    p.validate()?;
    let filter = p.filter()?;
    let jsa = default_jsa(p.pump_duration)?;
    let signal_bw = marginal_spectrum(&jsa, Arm::Signal).fwhm;
    let input_pulse = transform_limit(signal_bw, FilterShape::GaussianGrating)?;
    let tl = transform_limit(p.filter_fwhm, p.filter_shape)?;
    let dt = (tl / 8.0).clamp(0.5, 4.0);
    let t1_free = crate::coherence::lifetime_from_linewidth(p.qd_linewidth);
    let bound = |t1: f64, d: Dephasing| -> Result<TheoryBound> {
        let grid = theory_grid(t1, &filter, dt)?;
        let pulse = TemporalAmplitude::gaussian(input_pulse, 0.0, grid)?;
        max_theoretical_coalescence(p.qd_linewidth, &filter, &pulse, d)
    };
    let dephasing_free = bound(t1_free, Dephasing::None)?;
    let with_dephasing = bound(p.t1, Dephasing::Included { t1: p.t1, t2: p.t2 })?;
    Ok(TheoryReport {
        preset: p.clone(),
        transform_limit: tl,
        input_pulse,
        spectral_transmission: spectral_transmission(&jsa, Some(&filter), None)?,
        dephasing_free,
        with_dephasing,
    })
}

impl TheoryReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let p = &self.preset;
        vec![
            ("filter_fwhm_GHz", p.filter_fwhm),
            ("qd_linewidth_GHz", p.qd_linewidth),
            ("T1_ps", p.t1),
            ("T2_ps", p.t2),
            ("pump_duration_ps", p.pump_duration),
            ("transform_limit_ps", self.transform_limit),
            ("input_pulse_ps", self.input_pulse),
            ("spectral_transmission", self.spectral_transmission),
            ("filter_transmitted_fraction", self.dephasing_free.filter_transmission),
            ("max_coalescence_dephasing_free", self.dephasing_free.value),
            ("optimal_delay_dephasing_free_ps", self.dephasing_free.delay),
            ("max_coalescence_with_dephasing", self.with_dephasing.value),
            ("optimal_delay_with_dephasing_ps", self.with_dephasing.delay),
        ]
    }

    pub fn to_key_values(&self) -> String {
        let mut s = format!("preset={}\nfilter_shape={}\n", self.preset.name, self.preset.filter_shape);
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k}={v:.6}");
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "quantity,value")?;
        for (k, v) in self.rows() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

/// Parameters of the spectra command.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraParams {
    pub pump_duration: f64,
    pub phasematch: PhasematchParams,
    /// Filter in front of one detector for the dip curve and on the signal arm for
    /// the filtered marginal.
    pub filter: SpectralFilter,
    pub delays: Vec<f64>,
}

impl Default for SpectraParams {
    fn default() -> Self {
        Self {
            pump_duration: 10.0,
            phasematch: PhasematchParams::default(),
            filter: SpectralFilter::gaussian(30.0).unwrap(),
            delays: (-200..=200).map(|k| k as f64 * 0.5).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectraReport {
    pub jsa: JointSpectralAmplitude,
    pub signal_fwhm: f64,
    pub idler_fwhm: f64,
    pub filtered_signal_fwhm: f64,
    pub dip_unfiltered: DipCurve,
    pub dip_filtered: DipCurve,
}

pub fn cmd_spectra(p: &SpectraParams) -> Result<SpectraReport> {
    let g = spectral_grid()?;
    let jsa = build_jsa(p.pump_duration, p.phasematch, g, g)?;
    let s = marginal_spectrum(&jsa, Arm::Signal);
    let i = marginal_spectrum(&jsa, Arm::Idler);
    let fs = filtered_marginal(&jsa, Arm::Signal, Some(&p.filter));
    let dip_unfiltered = hom_dip_curve(&jsa, &p.delays, None)?;
    let dip_filtered = hom_dip_curve(&jsa, &p.delays, Some(&p.filter))?;
    Ok(SpectraReport {
        signal_fwhm: s.fwhm,
        idler_fwhm: i.fwhm,
        filtered_signal_fwhm: fs.fwhm,
        jsa,
        dip_unfiltered,
        dip_filtered,
    })
}

impl SpectraReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "pump_duration_ps={}\nsignal_fwhm_GHz={:.3}\nidler_fwhm_GHz={:.3}\nfiltered_signal_fwhm_GHz={:.3}\n\
             frequency_correlation={:.4}\nvisibility_unfiltered={:.4}\nvisibility_filtered={:.4}\n",
            self.jsa.pump_fwhm_time,
            self.signal_fwhm,
            self.idler_fwhm,
            self.filtered_signal_fwhm,
            self.jsa.frequency_correlation(),
            self.dip_unfiltered.visibility,
            self.dip_filtered.visibility,
        )
    }

    /// jsa.csv, marginal_{signal,idler}.csv, marginal_signal_filtered.csv,
    /// dip_unfiltered.csv, dip_filtered.csv.
    pub fn write_csvs(&self, dir: &Path, filter: &SpectralFilter) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let out = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        self.jsa.write_csv(out("jsa.csv")?)?;
        write_marginal_csv(&marginal_spectrum(&self.jsa, Arm::Signal), out("marginal_signal.csv")?)?;
        write_marginal_csv(&marginal_spectrum(&self.jsa, Arm::Idler), out("marginal_idler.csv")?)?;
        write_marginal_csv(&filtered_marginal(&self.jsa, Arm::Signal, Some(filter)), out("marginal_signal_filtered.csv")?)?;
        self.dip_unfiltered.curve.write_csv(out("dip_unfiltered.csv")?, "delay_ps")?;
        self.dip_filtered.curve.write_csv(out("dip_filtered.csv")?, "delay_ps")?;
        Ok(())
    }
}

/// Simulate one run into `out`. Returns the number of records written.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<u64> {
    let run = simulate_run(cfg)?;
    let header = run.header();
    let mut w = BufWriter::new(File::create(out)?);
    let n = write_tags(run, header, &mut w)?;
    w.flush()?;
    Ok(n)
}

/// Stream one tag file into an accumulation; the period and bin come from its header.
pub fn accumulate_file(path: &Path, side_peaks: usize) -> Result<RunAccumulation> {
    let reader = read_tags(BufReader::with_capacity(1 << 20, File::open(path)?))?;
    let h = reader.header();
    analyze_stream(reader, RepSource::Known(h.rep_ps), h.bin_ps, side_peaks)
}

pub fn cmd_analyze(perp: &Path, par: &Path, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let a = accumulate_file(perp, opts.side_peaks)?;
    let b = accumulate_file(par, opts.side_peaks)?;
    if (a.rep, a.bin) != (opts.physics.rep_ps(), opts.physics.bin_ps()) {
        return Err(Error::Config {
            key: "rep_period".into(),
            msg: format!(
                "tag file has rep_ps={} bin_ps={}, configuration says {} and {}",
                a.rep,
                a.bin,
                opts.physics.rep_ps(),
                opts.physics.bin_ps()
            ),
        });
    }
    analyze_pair(&a, &b, opts)
}

/// Settings of the one-command table reproduction.
#[derive(Debug, Clone, PartialEq)]
pub struct TableOptions {
    /// Simulated run per polarization (the stretcher column).
    pub physics: ExperimentConfig,
    pub window_bins: usize,
    /// Directory for the two tag files; they are streamed from memory when `None`.
    pub tag_dir: Option<PathBuf>,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { physics: ExperimentConfig::default(), window_bins: 3, tag_dir: None }
    }
}

#[derive(Debug, Clone)]
pub struct Table1 {
    pub theory: Vec<TheoryReport>,
    pub analysis: AnalysisReport,
}

/// Theory for all three presets plus a simulated and analyzed stretcher pair.
pub fn reproduce_table1(opts: &TableOptions) -> Result<Table1> {
    let theory = ScenarioPreset::all().iter().map(cmd_theory).collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    for (pol, seed_offset) in [(Polarization::Orthogonal, 0), (Polarization::Parallel, 1)] {
        let cfg = ExperimentConfig { polarization: pol, seed: opts.physics.seed + seed_offset, ..opts.physics.clone() };
        let acc = match &opts.tag_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{pol}.tags"));
                cmd_simulate(&cfg, &path)?;
                accumulate_file(&path, 6)?
            }
            None => analyze_stream(simulate_run(&cfg)?.map(Ok), RepSource::Known(cfg.rep_ps()), cfg.bin_ps(), 6)?,
        };
        runs.push(acc);
    }
    let aopts = AnalysisOptions {
        physics: opts.physics.clone(),
        window: WindowChoice::AfterArrival { bins: opts.window_bins },
        ..Default::default()
    };
    let analysis = analyze_pair(&runs[0], &runs[1], &aopts)?;
    Ok(Table1 { theory, analysis })
}

impl Table1 {
    /// The comparison table; only the pulse-stretcher column is simulated.
    pub fn render(&self) -> String {
        fn pct(x: f64) -> String {
            format!("{:.0}", 100.0 * x)
        }
        let col = |name: &str| self.theory.iter().find(|t| t.preset.name == name);
        let a = &self.analysis;
        let mut rows: Vec<(String, [String; 3], &str)> = Vec::new();
        let theory_row = |f: fn(&TheoryReport) -> String| -> [String; 3] {
            ScenarioPreset::NAMES.map(|n| col(n).map_or("-".into(), f))
        };
        rows.push(("Max. theoretical coalescence".into(), theory_row(|t| pct(t.dephasing_free.value)), "%"));
        rows.push((
            "Measured raw coalescence".into(),
            ["-".into(), format!("{:.0}({:.0})", 100.0 * a.p_c, (100.0 * a.sigma_p_c).ceil()), "-".into()],
            "%",
        ));
        rows.push((
            "Time-selected coalescence".into(),
            [
                "-".into(),
                format!("{:.0}({:.0})", 100.0 * a.p_c_filtered, (100.0 * a.sigma_p_c_filtered).ceil()),
                "-".into(),
            ],
            "%",
        ));
        rows.push((
            "Time window".into(),
            ["-".into(), format!("{}", a.windows.d1.len() as u64 * a.windows.bin), "-".into()],
            "ps",
        ));
        rows.push((
            "Time selection efficiency".into(),
            ["-".into(), format!("{:.1}", 100.0 * a.selection_efficiency), "-".into()],
            "%",
        ));
        rows.push(("2T_1/T_2".into(), theory_row(|t| format!("{:.1}", 2.0 * t.preset.t1 / t.preset.t2)), ""));
        rows.push(("Delta nu_SPDC".into(), theory_row(|t| format!("{}", t.preset.filter_fwhm)), "GHz"));
        rows.push(("Delta nu_QD".into(), theory_row(|t| format!("{}", t.preset.qd_linewidth)), "GHz"));
        rows.push((
            "Max. coalescence with dephasing".into(),
            theory_row(|t| pct(t.with_dephasing.value)),
            "%",
        ));

        let mut s = format!("{:<34}{:>14}{:>14}{:>14}  unit\n", "", "fbg30", "stretcher7p7", "polyakov0p9");
        for (label, cols, unit) in rows {
            let _ = writeln!(s, "{label:<34}{:>14}{:>14}{:>14}  {unit}", cols[0], cols[1], cols[2]);
        }
        s
    }
}

/// `key=value` overrides of the form used on the command line.
pub fn apply_overrides(cfg: &mut ExperimentConfig, sets: &[String]) -> Result<()> {
    for kv in sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config { key: kv.clone(), msg: "expected key=value".into() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

impl FromStr for ScenarioPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::named(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_table_parameters() {
        let f = ScenarioPreset::named("fbg30").unwrap();
        assert_eq!((f.filter_fwhm, f.qd_linewidth), (30.0, 1.2));
        let p = ScenarioPreset::named("polyakov0p9").unwrap();
        assert!((2.0 * p.t1 / p.t2 - 5.7).abs() < 0.05);
        let s = ScenarioPreset::named("stretcher7p7").unwrap();
        assert!((2.0 * s.t1 / s.t2 - 3.0).abs() < 0.05);
        assert!(ScenarioPreset::named("fp").is_err());
    }

    #[test]
    fn overrides_name_bad_keys() {
        let mut c = ExperimentConfig::default();
        apply_overrides(&mut c, &["seed=7".into()]).unwrap();
        assert_eq!(c.seed, 7);
        match apply_overrides(&mut c, &["sead=7".into()]) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sead"),
            other => panic!("{other:?}"),
        }
    }
}
