use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::coherence::FilterShape;
use crate::error::{Error, Result};
use crate::hom::Polarization;

/// Everything a simulated run depends on. Times in ps unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rep_period: f64,
    pub t1: f64,
    pub t2: f64,
    /// Per detector, FWHM. Two detectors combine to sqrt(2) times this on t2 - t1.
    pub jitter_fwhm: f64,
    pub bin: f64,
    pub herald_prob_per_pulse: f64,
    /// Probability that a heralded signal photon reaches a splitter output detector.
    pub spdc_survival: f64,
    pub qd_click_prob: f64,
    pub polarization: Polarization,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    /// Hz per HOM detector.
    pub background_rate: f64,
    /// Emit a sync tag every this many laser periods.
    pub sync_decimation: u64,
    pub spdc_filter_shape: FilterShape,
    /// GHz.
    pub spdc_filter_fwhm: f64,
    /// Pump pulse length behind the heralded state; 0 uses the filter's
    /// transform-limited response instead.
    pub spdc_pump_duration: f64,
    /// Arrival of the filtered SPDC pulse center after the dot's emission onset.
    pub spdc_delay: f64,
    /// Dot emission onset within the period.
    pub emission_offset: f64,
    /// Herald detection within the period.
    pub herald_offset: f64,
    /// Intensity reflectivity of the splitter.
    pub bs_reflectivity: f64,
    /// Sampling step of the physics grid.
    pub grid_dt: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rep_period: 12200.0,
            t1: 328.0,
            t2: 216.0,
            jitter_fwhm: 169.7,
            bin: 128.0,
            herald_prob_per_pulse: 0.01,
            spdc_survival: 0.015,
            qd_click_prob: 0.015,
            polarization: Polarization::Orthogonal,
            duration: 10.0,
            seed: 1,
            background_rate: 0.0,
            sync_decimation: 1000,
            spdc_filter_shape: FilterShape::RectSlit,
            spdc_filter_fwhm: 7.7,
            spdc_pump_duration: 10.0,
            spdc_delay: 100.0,
            emission_offset: 2000.0,
            herald_offset: 1000.0,
            bs_reflectivity: 0.5,
            grid_dt: 4.0,
        }
    }
}

const KEYS: &[&str] = &[
    "rep_period",
    "t1",
    "t2",
    "jitter_fwhm",
    "bin",
    "herald_prob_per_pulse",
    "spdc_survival",
    "qd_click_prob",
    "polarization",
    "duration",
    "seed",
    "background_rate",
    "sync_decimation",
    "spdc_filter_shape",
    "spdc_filter_fwhm",
    "spdc_pump_duration",
    "spdc_delay",
    "emission_offset",
    "herald_offset",
    "bs_reflectivity",
    "grid_dt",
];

fn cfg_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), msg: msg.into() }
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(key, format!("cannot parse `{v}`")))
}

impl ExperimentConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Set one field from text. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "rep_period" => self.rep_period = parse_val(key, v)?,
            "t1" => self.t1 = parse_val(key, v)?,
            "t2" => self.t2 = parse_val(key, v)?,
            "jitter_fwhm" => self.jitter_fwhm = parse_val(key, v)?,
            "bin" => self.bin = parse_val(key, v)?,
            "herald_prob_per_pulse" => self.herald_prob_per_pulse = parse_val(key, v)?,
            "spdc_survival" => self.spdc_survival = parse_val(key, v)?,
            "qd_click_prob" => self.qd_click_prob = parse_val(key, v)?,
            "polarization" => self.polarization = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?,
            "duration" => self.duration = parse_val(key, v)?,
            "seed" => self.seed = parse_val(key, v)?,
            "background_rate" => self.background_rate = parse_val(key, v)?,
            "sync_decimation" => self.sync_decimation = parse_val(key, v)?,
            "spdc_filter_shape" => {
                self.spdc_filter_shape = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?
            }
            "spdc_filter_fwhm" => self.spdc_filter_fwhm = parse_val(key, v)?,
            "spdc_pump_duration" => self.spdc_pump_duration = parse_val(key, v)?,
            "spdc_delay" => self.spdc_delay = parse_val(key, v)?,
            "emission_offset" => self.emission_offset = parse_val(key, v)?,
            "herald_offset" => self.herald_offset = parse_val(key, v)?,
            "bs_reflectivity" => self.bs_reflectivity = parse_val(key, v)?,
            "grid_dt" => self.grid_dt = parse_val(key, v)?,
            _ => return Err(cfg_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Flat `key=value` text; `#` starts a comment. Keys not given keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("line {}: expected key=value", n + 1)))?;
            c.set(k.trim(), v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key with its effective value, parseable by [`ExperimentConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.value_of(k));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "rep_period" => self.rep_period.to_string(),
            "t1" => self.t1.to_string(),
            "t2" => self.t2.to_string(),
            "jitter_fwhm" => self.jitter_fwhm.to_string(),
            "bin" => self.bin.to_string(),
            "herald_prob_per_pulse" => self.herald_prob_per_pulse.to_string(),
            "spdc_survival" => self.spdc_survival.to_string(),
            "qd_click_prob" => self.qd_click_prob.to_string(),
            "polarization" => self.polarization.to_string(),
            "duration" => self.duration.to_string(),
            "seed" => self.seed.to_string(),
            "background_rate" => self.background_rate.to_string(),
            "sync_decimation" => self.sync_decimation.to_string(),
            "spdc_filter_shape" => self.spdc_filter_shape.to_string(),
            "spdc_filter_fwhm" => self.spdc_filter_fwhm.to_string(),
            "spdc_pump_duration" => self.spdc_pump_duration.to_string(),
            "spdc_delay" => self.spdc_delay.to_string(),
            "emission_offset" => self.emission_offset.to_string(),
            "herald_offset" => self.herald_offset.to_string(),
            "bs_reflectivity" => self.bs_reflectivity.to_string(),
            "grid_dt" => self.grid_dt.to_string(),
            _ => unreachable!(),
        }
    }

    /// Laser periods in the run.
    pub fn n_periods(&self) -> u64 {
        (self.duration * 1e12 / self.rep_period).floor() as u64
    }

    /// Integer period used for timestamps.
    pub fn rep_ps(&self) -> u64 {
        self.rep_period.round() as u64
    }

    pub fn bin_ps(&self) -> u64 {
        self.bin.round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        for (k, p) in [
            ("herald_prob_per_pulse", self.herald_prob_per_pulse),
            ("spdc_survival", self.spdc_survival),
            ("qd_click_prob", self.qd_click_prob),
            ("bs_reflectivity", self.bs_reflectivity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(cfg_err(k, format!("{p} is not a probability")));
            }
        }
        let whole = |k: &str, v: f64| -> Result<()> {
            if !(v >= 1.0) || v.fract() != 0.0 {
                return Err(cfg_err(k, format!("{v} must be a positive whole number of ps")));
            }
            Ok(())
        };
        whole("rep_period", self.rep_period)?;
        whole("bin", self.bin)?;
        if self.bin > self.rep_period {
            return Err(cfg_err("bin", "longer than the repetition period"));
        }
        if !(self.t1 > 0.0) {
            return Err(cfg_err("t1", "must be positive"));
        }
        if !(self.t2 > 0.0 && self.t2 <= 2.0 * self.t1) {
            return Err(cfg_err("t2", "must satisfy 0 < T2 <= 2 T1"));
        }
        for (k, v) in [
            ("jitter_fwhm", self.jitter_fwhm),
            ("background_rate", self.background_rate),
            ("spdc_pump_duration", self.spdc_pump_duration),
            ("emission_offset", self.emission_offset),
            ("herald_offset", self.herald_offset),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(cfg_err(k, "must be finite and >= 0"));
            }
        }
        if !self.spdc_delay.is_finite() {
            return Err(cfg_err("spdc_delay", "must be finite"));
        }
        if !(self.spdc_filter_fwhm > 0.0) {
            return Err(cfg_err("spdc_filter_fwhm", "must be positive"));
        }
        if !(self.grid_dt > 0.0) {
            return Err(cfg_err("grid_dt", "must be positive"));
        }
        if self.sync_decimation == 0 {
            return Err(cfg_err("sync_decimation", "must be >= 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(cfg_err("duration", "must be positive"));
        }
        if self.emission_offset >= self.rep_period || self.herald_offset >= self.rep_period {
            return Err(cfg_err("emission_offset", "offsets must lie inside the period"));
        }
        // timestamps are u64 ps; keep the last one and its jitter well inside
        let end_ps = self.duration * 1e12 + self.rep_period;
        if end_ps > (u64::MAX / 4) as f64 {
            return Err(cfg_err("duration", format!("{:.3e} ps overflows the timestamp range", end_ps)));
        }
        let expected = self.n_periods() as f64
            * (self.herald_prob_per_pulse * 3.0 + 1.0 / self.sync_decimation as f64)
            + 2.0 * self.background_rate * self.duration;
        if expected > 1e15 {
            return Err(cfg_err("duration", format!("{expected:.3e} expected events is beyond range")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let mut c = ExperimentConfig::default();
        c.polarization = Polarization::Parallel;
        c.seed = 42;
        c.spdc_filter_shape = FilterShape::GaussianGrating;
        let back = ExperimentConfig::parse(&c.to_config_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_named() {
        match ExperimentConfig::parse("t1=300\nfoo=3\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "foo"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks() {
        let c = ExperimentConfig::parse("# run\n\nt2 = 200  # short\n").unwrap();
        assert_eq!(c.t2, 200.0);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "qd_click_prob=1.5",
            "t2=700",
            "rep_period=0",
            "bin=100.5",
            "duration=1e9",
            "polarization=diagonal",
            "sync_decimation=0",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }
}
