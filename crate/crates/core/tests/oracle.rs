use zenodyn::analytic::survival_two_level;
use zenodyn::dynamics::{evolve, linear_samples, survival_probability, IntegratorConfig, TimeSeries};
use zenodyn::generator::build_measured_lorentzian;
use zenodyn::model::{ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid};
use zenodyn::oracle::*;
use zenodyn::spectrum::unmeasured_spectrum_closed;

fn reference(t: &[f64], f: impl Fn(f64) -> f64) -> TimeSeries {
    TimeSeries::new("sigma00", t.to_vec(), t.iter().map(|&x| f(x)).collect()).unwrap()
}

fn constant_error(width: f64, n: usize) -> f64 {
    let spec = ConstantWidthSpec::new(0.0, 1.0).unwrap();
    let t = linear_samples(5.0, 501);
    let grid = ReservoirGrid::centered(0.0, width, n).unwrap();
    let a = evolve_amplitudes_constant(&spec, &grid, &t, &OracleConfig::default()).unwrap();
    let exact = reference(&t, |x| (-x).exp());
    compare(&window(&a.survival(), 0.2, 5.0), &window(&exact, 0.2, 5.0))
        .unwrap()
        .max_abs
}

#[test]
fn amplitude_evolution_is_unitary() {
    let t = linear_samples(5.0, 51);
    let spec = ConstantWidthSpec::new(0.3, 1.0).unwrap();
    let grid = ReservoirGrid::centered(0.0, 40.0, 2000).unwrap();
    let a = evolve_amplitudes_constant(&spec, &grid, &t, &OracleConfig::default()).unwrap();
    assert!(a.norm().values().iter().all(|n| (n - 1.0).abs() < 1e-9));

    let lspec = LorentzianDosSpec::with_background_width(0.0, 3.0, 1.0, 4.0, 0.5).unwrap();
    let grid = ReservoirGrid::centered(0.0, 100.0, 1000).unwrap();
    let a = evolve_amplitudes_lorentzian(&lspec, &grid, &t, &OracleConfig::default()).unwrap();
    assert!(a.norm().values().iter().all(|n| (n - 1.0).abs() < 1e-9));
    assert!(a.b1(0).is_some());
}

#[test]
fn lorentzian_survival_matches_two_level_form() {
    let spec = LorentzianDosSpec::new(0.0, 0.0, 1.0, 10.0, 0.0).unwrap();
    let grid = ReservoirGrid::centered(0.0, 400.0, 4000).unwrap();
    let t = linear_samples(30.0, 301);
    assert!(t[300] < 0.5 * grid.recurrence_time());
    let a = evolve_amplitudes_lorentzian(&spec, &grid, &t, &OracleConfig::default()).unwrap();
    let exact = reference(&t, |x| survival_two_level(1.0, 0.0, 10.0, x));
    let rep = compare(&a.survival(), &exact).unwrap();
    assert!(rep.max_abs < 1e-3, "{rep:?}");

    // The line is complete by now; its profile is the unmeasured spectrum.
    let profile = a.energy_profile(300);
    let peak = unmeasured_spectrum_closed(&spec, 0.0);
    let mut checked = 0;
    for (p, e) in profile.iter().zip(grid.energies()) {
        let closed = unmeasured_spectrum_closed(&spec, e);
        if closed > 0.5 * peak {
            assert!((p - closed).abs() < 0.02 * closed, "E={e}: {p} vs {closed}");
            checked += 1;
        }
    }
    assert!(checked >= 3, "{checked}");
}

#[test]
fn detuned_lorentzian_error_shrinks_with_window() {
    let spec = LorentzianDosSpec::new(0.0, 10.0, 1.0, 10.0, 0.0).unwrap();
    let t = linear_samples(15.0, 151);
    let exact = reference(&t, |x| survival_two_level(1.0, -10.0, 10.0, x));
    let err = |w: f64| {
        let grid = ReservoirGrid::centered(10.0, w, (10.0 * w) as usize).unwrap();
        let a = evolve_amplitudes_lorentzian(&spec, &grid, &t, &OracleConfig::default()).unwrap();
        compare(&a.survival(), &exact).unwrap().max_abs
    };
    let (coarse, fine) = (err(100.0), err(200.0));
    assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
}

#[test]
fn short_time_loss_is_quadratic() {
    let t = linear_samples(0.05, 201);
    for e1 in [0.0, 10.0] {
        let spec = LorentzianDosSpec::new(0.0, e1, 1.0, 10.0, 0.0).unwrap();
        let grid = ReservoirGrid::centered(e1, 400.0, 4000).unwrap();
        let a = evolve_amplitudes_lorentzian(&spec, &grid, &t, &OracleConfig::default()).unwrap();
        let c = a.survival().polynomial_fit(0.05, 6).unwrap();
        assert!((-c[2] - 1.0).abs() < 1e-2, "oracle e1={e1}: {}", -c[2]);
        for gd in [0.0, 10.0] {
            let gen = build_measured_lorentzian(&spec, &DetectorSpec::with_decoherence(gd).unwrap(), &grid).unwrap();
            let traj = evolve(&gen, &gen.initial_state(), &t, &IntegratorConfig::expm()).unwrap();
            let c = survival_probability(&traj).unwrap().polynomial_fit(0.05, 6).unwrap();
            assert!((-c[2] - 1.0).abs() < 1e-2, "rate e1={e1} gd={gd}: {}", -c[2]);
        }
    }
}

#[test]
fn constant_error_is_set_by_window() {
    // The flat band misses the far tails of the line: the deviation falls
    // with the window and is insensitive to the spacing.
    let e40 = constant_error(40.0, 2000);
    let e160 = constant_error(160.0, 8000);
    assert!(e160 < 0.5 * e40, "{e40} -> {e160}");
    assert!((constant_error(40.0, 1000) - e40).abs() < 1e-5);
}
