//! Shortest pulse behind each filter shape, and the filtered response's own width.
use hybrid_hom::coherence::{filter_amplitude_response, transform_limit, FilterShape, SpectralFilter};
use hybrid_hom::grid::TimeGrid;

fn main() -> hybrid_hom::Result<()> {
    let cases = [
        (FilterShape::GaussianGrating, 30.0),
        (FilterShape::RectSlit, 7.7),
        (FilterShape::LorentzianCavity, 0.9),
    ];
    println!("{:<12}{:>10}{:>14}{:>14}", "shape", "fwhm GHz", "limit ps", "sampled ps");
    for (shape, fwhm) in cases {
        let tl = transform_limit(fwhm, shape)?;
        let f = SpectralFilter::new(shape, fwhm)?;
        let dt = tl / 40.0;
        let grid = TimeGrid::covering(-30.0 * tl, 30.0 * tl, dt)?;
        let h = filter_amplitude_response(&f, grid)?;
        println!("{:<12}{:>10}{:>14.3}{:>14.3}", shape.to_string(), fwhm, tl, h.intensity_fwhm());
    }
    Ok(())
}
