use zenodyn::analytic::{measured_spectrum_aligned, occ_limit_lorentzian};
use zenodyn::dynamics::{evolve, IntegratorConfig};
use zenodyn::generator::build_measured_lorentzian;
use zenodyn::model::{ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid};
use zenodyn::spectrum::*;

fn lspec(e1: f64, gamma1: f64) -> LorentzianDosSpec {
    LorentzianDosSpec::new(0.0, e1, 1.0, gamma1, 0.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn solver_matches_unmeasured_closed_form() {
    for (e1, g1) in [(0.0, 10.0), (10.0, 10.0), (5.0, 0.5), (-3.0, 2.0), (1.0, 50.0)] {
        let spec = lspec(e1, g1);
        let s = spectrum_scan(&spec, &DetectorSpec::off(), &linspace(-20.0, 20.0, 101)).unwrap();
        for (&e, &p) in s.energies().iter().zip(s.density()) {
            let closed = unmeasured_spectrum_closed(&spec, e);
            assert!(rel(p, closed) < 1e-10, "e1={e1} g1={g1} E={e}: {p} vs {closed}");
        }
    }
}

#[test]
fn aligned_levels_match_closed_form() {
    for gd in [0.0, 10.0, 0.7, 3.0] {
        let spec = lspec(0.0, 10.0);
        let det = DetectorSpec::with_decoherence(gd).unwrap();
        for e in linspace(-25.0, 25.0, 101) {
            let p = spectral_density(&spec, &det, e).unwrap();
            let closed = measured_spectrum_aligned(1.0, 10.0, gd, e);
            assert!(rel(p, closed) < 1e-10, "gd={gd} E={e}: {p} vs {closed}");
        }
    }
}

#[test]
fn documented_peak_values() {
    let spec = lspec(0.0, 10.0);
    let p0 = spectral_density(&spec, &DetectorSpec::off(), 0.0).unwrap();
    assert!((p0 - 10.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    let p10 = spectral_density(&spec, &DetectorSpec::with_decoherence(10.0).unwrap(), 0.0).unwrap();
    assert!((p10 - 40.0 / (std::f64::consts::PI * 104.0)).abs() < 1e-12);
    let c = ConstantWidthSpec::new(0.0, 1.0).unwrap();
    let p = constant_spectrum_closed(&c, &DetectorSpec::with_decoherence(3.0).unwrap(), 0.0);
    assert!((p - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
}

#[test]
fn strong_coupling_limit_is_lorentzian() {
    let spec = lspec(0.0, 50.0);
    let half = 10.0 / 50.0;
    for e in linspace(-half, half, 41) {
        let p = spectral_density(&spec, &DetectorSpec::off(), e).unwrap();
        let lim = occ_limit_lorentzian(1.0, 50.0, 0.0, e);
        assert!(rel(p, lim) < 0.05, "E={e}: {p} vs {lim}");
    }
}

#[test]
fn block_flux_identities() {
    for (e1, g1, gd) in [(0.0, 10.0, 0.0), (10.0, 10.0, 10.0), (5.0, 0.5, 0.5), (-7.0, 0.1, 30.0)] {
        for omega in [0.3, 1.0, 4.0] {
            let spec = LorentzianDosSpec::new(0.0, e1, omega, g1, 0.0).unwrap();
            let b = time_integrated_block(&spec, &DetectorSpec::with_decoherence(gd).unwrap()).unwrap();
            assert!((g1 * b.sbar11 - 1.0).abs() < 1e-12);
            assert!((b.sbar01.im - 0.5 / omega).abs() < 1e-12);
            assert!(b.sbar00 > 0.0);
        }
    }
}

#[test]
fn spectra_are_normalized() {
    for (e1, g1, gd) in [
        (0.0, 10.0, 0.0),
        (0.0, 10.0, 10.0),
        (10.0, 10.0, 0.0),
        (5.0, 0.5, 0.0),
        (5.0, 0.5, 0.5),
        (5.0, 0.5, 10.0),
    ] {
        let s = normalized_spectrum(&lspec(e1, g1), &DetectorSpec::with_decoherence(gd).unwrap()).unwrap();
        assert!(
            (s.integral() - 1.0).abs() < 1e-3,
            "e1={e1} g1={g1} gd={gd}: {}",
            s.integral()
        );
        assert!(s.density().iter().all(|p| p.is_finite() && *p >= 0.0));
    }
}

#[test]
fn constant_line_width_follows_decoherence() {
    let c = ConstantWidthSpec::new(0.0, 1.0).unwrap();
    for gd in [0.0, 3.0, 10.0] {
        let det = DetectorSpec::with_decoherence(gd).unwrap();
        let s = Spectrum::sample("constant", linspace(-60.0, 60.0, 24001), |e| {
            constant_spectrum_closed(&c, &det, e)
        })
        .unwrap();
        let w = s.fwhm().unwrap();
        assert!(rel(w, 1.0 + gd) < 1e-2, "gd={gd}: {w}");
    }
}

#[test]
fn measurement_broadens_aligned_line() {
    let spec = lspec(0.0, 10.0);
    let energies = linspace(-40.0, 40.0, 16001);
    let mut last = 0.0;
    for gd in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let s = spectrum_scan(&spec, &DetectorSpec::with_decoherence(gd).unwrap(), &energies).unwrap();
        let w = s.fwhm().unwrap();
        assert!(w > last, "gd={gd}: {w} <= {last}");
        last = w;
    }
    let narrow = spectrum_scan(&spec, &DetectorSpec::off(), &energies)
        .unwrap()
        .fwhm()
        .unwrap();
    let wide = spectrum_scan(&spec, &DetectorSpec::with_decoherence(10.0).unwrap(), &energies)
        .unwrap()
        .fwhm()
        .unwrap();
    assert!(wide > 5.0 * narrow, "{wide} vs {narrow}");
}

#[test]
fn second_peak_grows_with_detection() {
    let spec = lspec(5.0, 0.5);
    let energies = linspace(-5.0, 10.0, 30001);
    let dominant = |gd: f64| {
        let s = spectrum_scan(&spec, &DetectorSpec::with_decoherence(gd).unwrap(), &energies).unwrap();
        s.energies()[s.argmax().unwrap()]
    };
    assert!(dominant(0.0).abs() < 1.0);
    assert!((dominant(10.0) - 5.0).abs() < 1.0);

    let s = spectrum_scan(&spec, &DetectorSpec::with_decoherence(0.5).unwrap(), &energies).unwrap();
    let big: Vec<_> = s.peaks().into_iter().filter(|p| p.height > 0.25 * s.max()).collect();
    assert_eq!(big.len(), 2, "{big:?}");
    assert!(big.iter().any(|p| p.energy.abs() < 1.0));
    assert!(big.iter().any(|p| (p.energy - 5.0).abs() < 1.0));
}

#[test]
fn late_time_occupations_match_spectrum() {
    for gd in [0.0, 10.0] {
        let spec = lspec(0.0, 10.0);
        let det = DetectorSpec::with_decoherence(gd).unwrap();
        let grid = ReservoirGrid::centered(0.0, 60.0, 600).unwrap();
        let gen = build_measured_lorentzian(&spec, &det, &grid).unwrap();
        let t_max = 0.45 * grid.recurrence_time();
        let traj = evolve(&gen, &gen.initial_state(), &[0.0, t_max], &IntegratorConfig::expm()).unwrap();
        let occ = traj.mode_populations(1);
        let peak = spectral_density(&spec, &det, 0.0).unwrap();
        for (k, e) in grid.energies().enumerate() {
            let p = spectral_density(&spec, &det, e).unwrap();
            if p < 0.1 * peak {
                continue;
            }
            let from_time = occ[k] / grid.spacing();
            assert!(rel(from_time, p) < 1e-2, "gd={gd} E={e}: {from_time} vs {p}");
        }
    }
}
