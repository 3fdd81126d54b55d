use hybrid_hom::coherence::{
    apply_filter, apply_filter_coherence, filter_amplitude_response, purity, qd_coherence, transform_limit, FilterShape,
    SpectralFilter, TemporalAmplitude, TwoTimeCoherence,
};
use hybrid_hom::grid::{FreqGrid, TimeGrid, GHZ_PS};
use hybrid_hom::hom::{
    coalescence_probability, coincidence_density, hom_dip_curve, max_theoretical_coalescence, smear_with_detector,
    theory_grid, Dephasing, Polarization, TauDensity,
};
use hybrid_hom::spdc::{
    build_jsa, heralded_signal_state, marginal_spectrum, schmidt_purity, schmidt_purity_sampled, spectral_transmission, Arm,
    HeraldingCalibration, JointSpectralAmplitude, PhasematchParams, PmBranch,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

const SHAPES: [FilterShape; 3] = [FilterShape::RectSlit, FilterShape::GaussianGrating, FilterShape::LorentzianCavity];

fn assert_valid_state(g: &TwoTimeCoherence, what: &str) {
    let m = g.values();
    let herm = (m - m.adjoint()).norm() / m.norm();
    assert!(herm < 1e-10, "{what}: not hermitian ({herm:e})");
    assert!((g.trace() - 1.0).abs() < 1e-6, "{what}: trace {}", g.trace());
    let (lo, _) = g.eigen_range();
    assert!(lo > -1e-9, "{what}: negative eigenvalue {lo:e}");
}

/// Tr(rho^2) from the eigenvalues of the discretized operator, an independent path
/// from the double sum used by `purity`.
fn eigen_purity(g: &TwoTimeCoherence) -> f64 {
    let dt = g.grid().dt;
    let m: DMatrix<Complex64> = g.values() * Complex64::new(dt, 0.0);
    m.symmetric_eigenvalues().iter().map(|l| l * l).sum()
}

fn reference_jsa(pump: f64) -> JointSpectralAmplitude {
    let g = FreqGrid::symmetric(800.0, 2.5).unwrap();
    build_jsa(pump, PhasematchParams::default(), g, g).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_limit_scales_inversely(f in 0.1f64..100.0, k in 0.05f64..20.0, s in 0usize..3) {
        let a = transform_limit(f, SHAPES[s]).unwrap();
        let b = transform_limit(k * f, SHAPES[s]).unwrap();
        prop_assert!((b - a / k).abs() <= 1e-12 * a);
    }

    #[test]
    fn coincidence_formula_integrals(delay in -700.0f64..700.0, t2_frac in 0.2f64..1.0) {
        let grid = TimeGrid::covering(-1200.0, 2400.0, 12.0).unwrap();
        let dot = qd_coherence(200.0, 400.0 * t2_frac, grid).unwrap();
        let pulse = TemporalAmplitude::gaussian(120.0, 0.0, grid).unwrap().to_coherence();
        let orth = coincidence_density(&dot, &pulse, Polarization::Orthogonal, delay).unwrap();
        prop_assert!((orth.integral() - 0.5).abs() < 2e-3, "{}", orth.integral());
        let par = coincidence_density(&dot, &pulse, Polarization::Parallel, delay).unwrap();
        prop_assert!((par.integral() + par.bunched_integral() - 1.0).abs() < 2e-3);
        prop_assert!(par.integral() <= orth.integral() + 1e-9);
    }

    #[test]
    fn coalescence_symmetric_and_bounded(t2a in 0.1f64..1.0, t2b in 0.1f64..1.0, w in 40.0f64..250.0) {
        let grid = TimeGrid::covering(-1000.0, 2000.0, 10.0).unwrap();
        let a = qd_coherence(150.0, 300.0 * t2a, grid).unwrap();
        let b = qd_coherence(170.0, 340.0 * t2b, grid).unwrap();
        let c = TemporalAmplitude::gaussian(w, 150.0, grid).unwrap().to_coherence();
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            let p = coalescence_probability(x, y).unwrap();
            let q = coalescence_probability(y, x).unwrap();
            prop_assert!((p - q).abs() < 1e-9);
            // Tr(rho_a rho_b) through an eigen-decomposition of rho_a
            let dt = grid.dt;
            let ra: DMatrix<Complex64> = x.values() * Complex64::new(dt, 0.0);
            let rb: DMatrix<Complex64> = y.values() * Complex64::new(dt, 0.0);
            let eig = ra.clone().symmetric_eigen();
            let mut tr = 0.0;
            for (k, l) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(k);
                tr += l * (v.adjoint() * &rb * v)[(0, 0)].re;
            }
            prop_assert!((p - tr).abs() < 1e-5, "{p} vs {tr}");
            prop_assert!(p <= (purity(x) * purity(y)).sqrt() + 1e-6);
        }
    }

    #[test]
    fn smearing_conserves_counts(j in 0.0f64..500.0, bin in 2.0f64..200.0, t1 in 50.0f64..600.0) {
        let dt = 2.0;
        let values: Vec<f64> = (0..2001).map(|k| {
            let tau = -2000.0 + k as f64 * dt;
            (-(tau.abs()) / t1).exp() / (2.0 * t1)
        }).collect();
        let d = TauDensity { tau0: -2000.0, dt, values };
        let total = d.values.iter().sum::<f64>() * dt;
        let c = smear_with_detector(&d, j, bin).unwrap();
        let out: f64 = c.values.iter().sum::<f64>() * bin;
        prop_assert!((out - total).abs() < 1e-9 * total.max(1.0), "{out} vs {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dephased_dot_is_a_valid_state_with_closed_form_purity(t1 in 150.0f64..500.0, r in 0.1f64..1.0) {
        let t2 = 2.0 * t1 * r;
        let grid = TimeGrid::covering(-20.0, 14.0 * t1, t1 / 40.0).unwrap();
        let g = qd_coherence(t1, t2, grid).unwrap();
        assert_valid_state(&g, "qd");
        let p = purity(&g);
        // point sampling of exp(-t/T1) carries an O(dt^2) error
        prop_assert!((p - r).abs() < 2e-3, "{p} vs {r}");
        prop_assert!((eigen_purity(&g) - p).abs() < 1e-8);
    }

    #[test]
    fn filtering_keeps_states_physical(fwhm in 8.0f64..25.0, s in 0usize..3, t2_frac in 0.2f64..1.0) {
        let grid = TimeGrid::new(-1000.0, 2.0, 1500).unwrap();
        let f = SpectralFilter::new(SHAPES[s], fwhm).unwrap();
        let pure = TemporalAmplitude::gaussian(20.0, 0.0, grid).unwrap();
        let out = apply_filter(&pure, &f).unwrap();
        let p = purity(&out.state.to_coherence());
        prop_assert!((p - 1.0).abs() < 1e-9, "filtered pure state has purity {p}");
        prop_assert!(out.transmitted_fraction > 0.0 && out.transmitted_fraction <= 1.0);

        let mixed = qd_coherence(150.0, 300.0 * t2_frac, grid).unwrap();
        let out = apply_filter_coherence(&mixed, &f).unwrap();
        assert_valid_state(&out.state, "filtered dot");
        let p = purity(&out.state);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&p));
    }
}

#[test]
fn filter_response_transforms_back_to_transfer_function() {
    for (shape, fwhm) in [(FilterShape::RectSlit, 7.7), (FilterShape::GaussianGrating, 30.0), (FilterShape::LorentzianCavity, 0.9)] {
        let f = SpectralFilter::new(shape, fwhm).unwrap();
        let dt = 0.04 / (fwhm * GHZ_PS);
        let grid = TimeGrid::new(-1024.0 * dt, dt, 2048).unwrap();
        let h = filter_amplitude_response(&f, grid).unwrap();
        let freqs = grid.fft_freqs();
        let dft = |nu: f64| -> Complex64 {
            h.samples()
                .iter()
                .enumerate()
                .map(|(j, c)| c * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * nu * grid.t(j) * GHZ_PS))
                .sum::<Complex64>()
        };
        let on: Vec<f64> = freqs.iter().cloned().filter(|&nu| f.power(nu) > 1e-6).collect();
        let got: Vec<Complex64> = on.iter().map(|&nu| dft(nu)).collect();
        let want: Vec<Complex64> = on.iter().map(|&nu| f.transfer(nu)).collect();
        // one complex scale: normalization of h
        let num: Complex64 = got.iter().zip(&want).map(|(g, w)| g * w.conj()).sum();
        let den: f64 = want.iter().map(|w| w.norm_sqr()).sum();
        let k = num / den;
        let rms = (got.iter().zip(&want).map(|(g, w)| (g / k - w).norm_sqr()).sum::<f64>() / on.len() as f64).sqrt();
        assert!(rms < 1e-6, "{shape}: rms {rms:e}");
    }
}

#[test]
fn schmidt_and_time_domain_purity_agree() {
    let jsa = reference_jsa(10.0);
    let grid = TimeGrid::new(-1200.0, 4.0, 600).unwrap();
    let df = 1.0 / (grid.n as f64 * grid.dt * GHZ_PS);
    for f in [SpectralFilter::rect(7.7).unwrap(), SpectralFilter::gaussian(30.0).unwrap()] {
        let st = heralded_signal_state(&jsa, Some(&f), None, grid, &HeraldingCalibration::default()).unwrap();
        let a = purity(&st.state);
        let b = schmidt_purity_sampled(&jsa, Some(&f), None, df).unwrap();
        assert!((a - b).abs() < 1e-4, "{f}: {a} vs {b}");
    }
}

#[test]
fn narrower_filters_purify_and_cost_efficiency() {
    let jsa = reference_jsa(10.0);
    let mut last = (0.0, 1.0);
    for fwhm in [120.0, 60.0, 30.0, 15.0, 7.7, 4.0] {
        let f = SpectralFilter::rect(fwhm).unwrap();
        let p = schmidt_purity(&jsa, Some(&f), None).unwrap();
        let t = spectral_transmission(&jsa, Some(&f), None).unwrap();
        assert!(p > last.0 - 1e-9, "purity fell at {fwhm}: {p} < {}", last.0);
        assert!(t < last.1 + 1e-12, "transmission rose at {fwhm}");
        last = (p, t);
    }
    assert!(last.0 > 0.95);
}

#[test]
fn marginals_and_anticorrelation() {
    let g = FreqGrid::symmetric(800.0, 2.5).unwrap();
    for (pump, a, branch) in [(6.0, 0.5, PmBranch::SameSign), (10.0, 0.5, PmBranch::SameSign), (10.0, 0.7, PmBranch::OppositeSign)] {
        let pm = PhasematchParams { asymmetry: a, branch, ..Default::default() };
        let jsa = build_jsa(pump, pm, g, g).unwrap();
        for arm in [Arm::Signal, Arm::Idler] {
            let m = marginal_spectrum(&jsa, arm);
            let area: f64 = m.intensity.iter().sum::<f64>() * g.step;
            assert!((area - 1.0).abs() < 1e-9);
        }
        // tracing in the other order: transpose the amplitude
        let s = marginal_spectrum(&jsa, Arm::Signal).fwhm;
        let i_direct: f64 = {
            let v = jsa.values();
            let col: Vec<f64> = (0..g.n).map(|c| (0..g.n).map(|r| v[(r, c)].norm_sqr()).sum()).collect();
            hybrid_hom::grid::fwhm(&col, g.step)
        };
        assert!((marginal_spectrum(&jsa, Arm::Idler).fwhm - i_direct).abs() < 1e-9);
        assert!(s > 0.0);
        if branch == PmBranch::SameSign {
            assert!(jsa.frequency_correlation() <= 0.0, "{}", jsa.frequency_correlation());
        }
    }
}

#[test]
fn filter_in_one_output_never_lowers_dip_visibility() {
    let delays: Vec<f64> = (-80..=80).map(|k| k as f64 * 0.5).collect();
    for pump in [6.0, 10.0] {
        let jsa = reference_jsa(pump);
        let v0 = hom_dip_curve(&jsa, &delays, None).unwrap().visibility;
        for f in [SpectralFilter::gaussian(30.0).unwrap(), SpectralFilter::rect(7.7).unwrap()] {
            let v1 = hom_dip_curve(&jsa, &delays, Some(&f)).unwrap().visibility;
            assert!(v1 >= v0 - 1e-9, "pump {pump}, {f}: {v1} < {v0}");
        }
    }
}

#[test]
fn identical_separable_arms_give_full_visibility() {
    let g = FreqGrid::symmetric(600.0, 2.5).unwrap();
    let pm = PhasematchParams { asymmetry: 1.0, branch: PmBranch::OppositeSign, ..Default::default() };
    let jsa = build_jsa(10.0, pm, g, g).unwrap();
    let v = hom_dip_curve(&jsa, &[0.0, 50.0], None).unwrap().visibility;
    assert!((v - 1.0).abs() < 1e-3, "{v}");
}

#[test]
fn dephasing_bound_reduces_to_pure_bound_at_twice_t1() {
    let f = SpectralFilter::rect(7.7).unwrap();
    let lw = 1.2;
    let t1 = hybrid_hom::coherence::lifetime_from_linewidth(lw);
    let grid = theory_grid(t1, &f, 4.0).unwrap();
    let pulse = TemporalAmplitude::gaussian(5.0, 0.0, grid).unwrap();
    let a = max_theoretical_coalescence(lw, &f, &pulse, Dephasing::None).unwrap();
    let b = max_theoretical_coalescence(lw, &f, &pulse, Dephasing::Included { t1, t2: 2.0 * t1 }).unwrap();
    assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
}

#[test]
fn orthogonal_coincidences_are_half_at_every_delay() {
    let grid = TimeGrid::covering(-1500.0, 3000.0, 10.0).unwrap();
    let dot = qd_coherence(328.0, 216.0, grid).unwrap();
    // roughly the width of the 7.7 GHz slit response
    let p = TemporalAmplitude::gaussian(115.0, 0.0, grid).unwrap().to_coherence();
    for d in [-400.0, -100.0, 0.0, 37.5, 100.0, 250.0, 600.0] {
        let c = coincidence_density(&dot, &p, Polarization::Orthogonal, d).unwrap();
        assert!((c.integral() - 0.5).abs() < 1e-3, "delay {d}: {}", c.integral());
    }
}
