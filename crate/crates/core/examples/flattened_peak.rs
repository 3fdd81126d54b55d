//! Central coincidence peak of the dot/SPDC pair: the parallel-polarization dip at
//! tau = 0 and how detector jitter washes it out.
use hybrid_hom::hom::{smear_with_detector, DotPulseTauModel};
use hybrid_hom::simkit::{physics_grid, signal_pulse, ExperimentConfig};

fn main() -> hybrid_hom::Result<()> {
    let cfg = ExperimentConfig::default();
    let grid = physics_grid(&cfg)?;
    let pulse = signal_pulse(&cfg, grid, cfg.spdc_delay)?;
    let model = DotPulseTauModel::from_state(cfg.t1, &pulse)?;
    let par = model.parallel_density(cfg.t2, 1.0);
    for jitter in [0.0, 120.0, 240.0] {
        let c = smear_with_detector(&par, jitter, grid.dt)?;
        let zero = c.delays.iter().position(|&d| d.abs() < 1e-9).unwrap();
        let dip = c.local_minima().contains(&zero);
        println!("jitter {jitter:>5} ps: value at 0 {:.3e}, local minimum at 0: {dip}", c.values[zero]);
    }
    let orth = smear_with_detector(&model.orthogonal_density(), 240.0, 128.0)?;
    let parb = smear_with_detector(&par, 240.0, 128.0)?;
    println!("\n tau_ps   orthogonal   parallel   (128 ps bins, 240 ps jitter)");
    for k in (0..orth.delays.len()).filter(|&k| orth.delays[k].abs() <= 1024.0) {
        println!("{:>7} {:>12.4e} {:>10.4e}", orth.delays[k], orth.values[k], parb.values[k]);
    }
    Ok(())
}
