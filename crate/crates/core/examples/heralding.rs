//! Heralding efficiency chain: a measured baseline and one filtered point fix the
//! calibration, which then predicts other filters.
use hybrid_hom::cli::spectral_grid;
use hybrid_hom::coherence::SpectralFilter;
use hybrid_hom::spdc::{build_jsa, spectral_transmission, HeraldingCalibration, PhasematchParams};

fn main() -> hybrid_hom::Result<()> {
    let g = spectral_grid()?;
    let jsa = build_jsa(10.0, PhasematchParams::default(), g, g)?;
    let slit = SpectralFilter::rect(7.7)?;
    let cal = HeraldingCalibration::calibrate(&jsa, &slit, 0.092, 0.015)?;
    println!("insertion factor {:.3}", cal.insertion);
    println!("unfiltered       {:.4}", cal.efficiency(spectral_transmission(&jsa, None, None)?, false));
    for f in [SpectralFilter::rect(7.7)?, SpectralFilter::rect(15.0)?, SpectralFilter::gaussian(30.0)?, SpectralFilter::lorentzian(0.9)?] {
        let t = spectral_transmission(&jsa, Some(&f), None)?;
        println!("{:<28} transmission {:.4}  efficiency {:.5}", f.to_string(), t, cal.efficiency(t, true));
    }
    Ok(())
}
