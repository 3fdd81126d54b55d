//! Joint spectrum of the pair source: marginal widths, Schmidt purity and the
//! signal-idler dip with and without a filter in one output.
use hybrid_hom::cli::spectral_grid;
use hybrid_hom::coherence::SpectralFilter;
use hybrid_hom::hom::hom_dip_curve;
use hybrid_hom::spdc::{build_jsa, marginal_spectrum, schmidt_purity, Arm, PhasematchParams};

fn main() -> hybrid_hom::Result<()> {
    let g = spectral_grid()?;
    let fbg = SpectralFilter::gaussian(30.0)?;
    let slit = SpectralFilter::rect(7.7)?;
    let delays: Vec<f64> = (-160..=160).map(|k| k as f64 * 0.5).collect();
    for pump in [6.0, 10.0] {
        let jsa = build_jsa(pump, PhasematchParams::default(), g, g)?;
        let s = marginal_spectrum(&jsa, Arm::Signal).fwhm;
        let i = marginal_spectrum(&jsa, Arm::Idler).fwhm;
        let v0 = hom_dip_curve(&jsa, &delays, None)?.visibility;
        let v1 = hom_dip_curve(&jsa, &delays, Some(&fbg))?.visibility;
        println!("pump {pump} ps: signal {s:.1} GHz, idler {i:.1} GHz");
        println!("  purity unfiltered {:.3}, behind 7.7 GHz slit {:.3}", schmidt_purity(&jsa, None, None)?, schmidt_purity(&jsa, Some(&slit), None)?);
        println!("  dip visibility {v0:.3} unfiltered, {v1:.3} with 30 GHz filter");
    }
    Ok(())
}
