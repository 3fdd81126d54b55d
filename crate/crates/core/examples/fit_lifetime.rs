//! Lifetime from the orthogonal central peak: plain two-sided exponential versus
//! the model that knows where the partner photon arrives.
//!
//! cargo run --release --example fit_lifetime -- [seconds]
use hybrid_hom::hom::TauDensity;
use hybrid_hom::simkit::{physics_grid, signal_pulse, simulate_run, ExperimentConfig};
use hybrid_hom::tagproc::{analyze_stream, fit_lifetime, fit_lifetime_with, BinResponse, LifetimeModel, RepSource, TimeWindows};

fn main() -> hybrid_hom::Result<()> {
    let duration: f64 = std::env::args().nth(1).map_or(120.0, |s| s.parse().expect("seconds"));
    let cfg = ExperimentConfig { duration, ..Default::default() };
    let acc = analyze_stream(simulate_run(&cfg)?.map(Ok), RepSource::Known(cfg.rep_ps()), cfg.bin_ps(), 6)?;
    let hist = acc.pseudo.central_tau_histogram(&TimeWindows::full(cfg.rep_ps(), cfg.bin_ps())?);
    println!("{} central coincidences", hist.total());

    let jitter = cfg.jitter_fwhm * std::f64::consts::SQRT_2;
    let plain = fit_lifetime(&hist, jitter, cfg.bin)?;
    println!("two-sided exponential:  T1 = {:.1} +- {:.1} ps, chi2/dof {:.1}/{}", plain.t1, plain.sigma_t1, plain.chi2, plain.dof);

    let grid = physics_grid(&cfg)?;
    let s = signal_pulse(&cfg, grid, cfg.spdc_delay)?;
    let partner = TauDensity { tau0: grid.t0, dt: grid.dt, values: s.diagonal() };
    let f = fit_lifetime_with(&hist, jitter, BinResponse::Triangular { offset: 0.0 }, &LifetimeModel::TwoSided { kernel: Some(partner) })?;
    println!("with partner pulse:     T1 = {:.1} +- {:.1} ps, chi2/dof {:.1}/{}", f.t1, f.sigma_t1, f.chi2, f.dof);
    println!("true                    T1 = {} ps", cfg.t1);
    Ok(())
}
