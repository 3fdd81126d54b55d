use std::path::Path;
use std::process::{Command, Output};

use hybrid_hom::hom::Polarization;
use hybrid_hom::simkit::{simulate_run, ExperimentConfig, CH_HERALD};
use hybrid_hom::tagproc::{analyze_pair, analyze_stream, AnalysisOptions, RepSource, WindowChoice};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-hom"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .trim()
        .parse()
        .unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn heralds_in(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(1).filter(|l| l.starts_with(&format!("{CH_HERALD}\t"))).count()
}

#[test]
fn theory_reports_both_variants_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = run(&["theory", "--preset", "fbg30", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    for k in ["max_coalescence_dephasing_free", "max_coalescence_with_dephasing", "transform_limit_ps", "filter_transmitted_fraction"] {
        let v = value(&s, k);
        assert!(v.is_finite() && v > 0.0, "{k}={v}");
    }
    assert!(value(&s, "max_coalescence_with_dephasing") < value(&s, "max_coalescence_dephasing_free"));
    assert!(std::fs::read_to_string(csv).unwrap().starts_with("quantity,value"));

    let o = run(&["theory", "--preset", "fabry-perot"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown preset"));

    let o = run(&["theory", "--preset", "custom", "--filter-shape", "gaussian", "--filter-fwhm", "15", "--t2", "656"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("preset=custom") && s.contains("filter_shape=gaussian"));
    // T2 = 2 T1 makes the dot pure
    assert!(value(&s, "max_coalescence_with_dephasing") > 0.0);
}

#[test]
fn simulate_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.tags", &["--duration", "0.2", "--seed", "5"]);
    let b = simulate(dir.path(), "b.tags", &["--duration", "0.2", "--seed", "5"]);
    let c = simulate(dir.path(), "c.tags", &["--duration", "0.2", "--seed", "5", "--polarization", "parallel"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);

    let out = dir.path().join("d.tags");
    let o = run(&["simulate", "--duration", "0.1", "--seed", "9", "--set", "t1=300", "--out", out.to_str().unwrap()]);
    let s = stdout(&o);
    assert!(s.contains("seed=9") && s.contains("t1=300") && s.contains("(seed 9)"), "{s}");

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nduration = 0.1\npolarization = parallel\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("polarization=parallel"));
}

#[test]
fn simulate_rejects_bad_config_by_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.tags");
    for (set, key) in [("t2=1000", "t2"), ("qd_click_prob=1.5", "qd_click_prob"), ("colour=red", "colour")] {
        let o = run(&["simulate", "--set", set, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{set}");
        let e = String::from_utf8_lossy(&o.stderr);
        assert!(e.contains(key), "{set}: {e}");
    }
}

#[test]
fn herald_count_scales_with_duration() {
    let dir = tempfile::tempdir().unwrap();
    let a = heralds_in(&simulate(dir.path(), "a.tags", &["--duration", "0.1", "--seed", "1"])) as f64;
    let b = heralds_in(&simulate(dir.path(), "b.tags", &["--duration", "0.2", "--seed", "2"])) as f64;
    // b - 2a has variance b + 4a
    assert!((b - 2.0 * a).abs() < 4.0 * (b + 4.0 * a).sqrt(), "{a} {b}");
}

#[test]
fn analyze_same_file_twice_gives_no_coalescence() {
    let dir = tempfile::tempdir().unwrap();
    let f = simulate(dir.path(), "o.tags", &["--duration", "3", "--seed", "4"]);
    let outdir = dir.path().join("csv");
    let o = run(&["analyze", f.to_str().unwrap(), f.to_str().unwrap(), "--out-dir", outdir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(value(&s, "P_C"), 0.0);
    assert_eq!(value(&s, "P_C_filtered"), 0.0);
    assert!(s.contains("config.t1="));
    assert!(outdir.join("pseudo_time_perp.csv").exists());
}

#[test]
fn analyze_reports_format_errors_with_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tags");
    std::fs::write(&bad, "#tagfile v1 rep_ps=12200 bin_ps=128\n0\t128\n1\t256\n2\t3").unwrap();
    let o = run(&["analyze", bad.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = String::from_utf8_lossy(&o.stderr);
    assert!(e.contains("byte"), "{e}");

    let o = run(&["analyze", "/nonexistent/a.tags", "/nonexistent/b.tags"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectra_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectra", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(value(&s, "signal_fwhm_GHz") < value(&s, "idler_fwhm_GHz"));
    assert!(value(&s, "visibility_filtered") >= value(&s, "visibility_unfiltered"));
    for f in ["jsa.csv", "marginal_signal.csv", "marginal_idler.csv", "marginal_signal_filtered.csv", "dip_unfiltered.csv", "dip_filtered.csv"] {
        assert!(dir.path().join(f).metadata().unwrap().len() > 100, "{f}");
    }
}

#[test]
fn wider_time_window_raises_efficiency_and_approaches_raw() {
    let base = ExperimentConfig { duration: 40.0, ..Default::default() };
    let mut runs = Vec::new();
    for (pol, seed) in [(Polarization::Orthogonal, 31), (Polarization::Parallel, 32)] {
        let cfg = ExperimentConfig { polarization: pol, seed, ..base.clone() };
        runs.push(analyze_stream(simulate_run(&cfg).unwrap().map(Ok), RepSource::Known(12200), 128, 6).unwrap());
    }
    let report = |bins| {
        let o = AnalysisOptions { physics: base.clone(), window: WindowChoice::AfterArrival { bins }, ..Default::default() };
        analyze_pair(&runs[0], &runs[1], &o).unwrap()
    };
    let (r3, r5) = (report(3), report(5));
    assert!(r5.selection_efficiency > r3.selection_efficiency);
    assert!(r5.a_perp_filtered >= r3.a_perp_filtered);
    let raw = r3.p_c;
    assert!((r5.p_c_filtered - raw).abs() < (r3.p_c_filtered - raw).abs() + r3.sigma_p_c_filtered, "raw {raw}, 3 bins {}, 5 bins {}", r3.p_c_filtered, r5.p_c_filtered);
}
