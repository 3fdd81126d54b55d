//! Dephased dot photon: purity, self-interference and its eigen-spectrum.
use hybrid_hom::coherence::{purity, qd_coherence};
use hybrid_hom::grid::TimeGrid;
use hybrid_hom::hom::coalescence_probability;

fn main() -> hybrid_hom::Result<()> {
    let (t1, t2) = (328.0, 216.0);
    let grid = TimeGrid::covering(-50.0, 14.0 * t1, 4.0)?;
    let g = qd_coherence(t1, t2, grid)?;
    println!("T1 = {t1} ps, T2 = {t2} ps");
    println!("trace              {:.6}", g.trace());
    println!("purity (numeric)   {:.6}", purity(&g));
    println!("T2/(2 T1)          {:.6}", t2 / (2.0 * t1));
    println!("self coalescence   {:.6}", coalescence_probability(&g, &g)?);
    let (lo, hi) = g.eigen_range();
    println!("eigenvalues in     [{lo:.2e}, {hi:.4}]");
    for t2 in [656.0, 400.0, 216.0, 100.0] {
        let g = qd_coherence(t1, t2, grid)?;
        println!("  T2 = {t2:>5}: purity {:.4}", purity(&g));
    }
    Ok(())
}
