use zenodyn::analytic::{measured_decay_time, survival_constant, survival_two_level};
use zenodyn::dynamics::{
    decay_time, evolve, linear_samples, survival_probability, total_probability, IntegratorConfig, TimeSeries,
};
use zenodyn::model::{ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid, SystemSpec};
use zenodyn::oracle::{compare, evolve_amplitudes_constant, evolve_amplitudes_lorentzian, window, OracleConfig};
use zenodyn::spectrum::{linspace, spectral_density, time_integrated_block, unmeasured_spectrum_closed};

use crate::run::traced_generator;
use crate::{CliError, ExperimentReport};

const ORACLE_TOL: f64 = 1e-3;

/// Oracle grid when none is given. The flat-band error of the amplitude
/// model falls like 1/W, so the window is far wider than the line.
fn oracle_grid(system: &SystemSpec) -> Result<ReservoirGrid, CliError> {
    Ok(match system {
        SystemSpec::Constant(c) => ReservoirGrid::centered(c.e0(), 1280.0 * c.gamma0(), 3200)?,
        SystemSpec::Lorentzian(l) => {
            let width = 40.0 * l.gamma1();
            let de = 0.1 * l.gamma1().min(l.omega());
            ReservoirGrid::centered(l.e1(), width, (width / de).ceil() as usize)?
        }
    })
}

fn series(t: &[f64], f: impl Fn(f64) -> f64) -> Result<TimeSeries, CliError> {
    Ok(TimeSeries::new(
        "sigma00",
        t.to_vec(),
        t.iter().map(|&x| f(x)).collect(),
    )?)
}

/// Cross-checks of one model: rate equations against closed forms and the
/// amplitude oracle, plus the algebraic identities of the spectrum solve.
/// `quick` skips the oracle runs.
pub fn validate_model(
    system: &SystemSpec,
    det: &DetectorSpec,
    grid: Option<ReservoirGrid>,
    quick: bool,
) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::new("validate");
    match system {
        SystemSpec::Constant(c) => constant_checks(c, det, grid, quick, &mut report, "")?,
        SystemSpec::Lorentzian(l) => lorentzian_checks(l, det, grid, quick, &mut report, "")?,
    }
    Ok(report)
}

/// The default suite: `Γ₀ = 1` constant width, and the aligned Lorentzian
/// model with `Γ₁ = 10Ω` observed at `Γ_d = 10Ω`.
pub fn validate_defaults(quick: bool) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::new("validate");
    let c = ConstantWidthSpec::new(0.0, 1.0)?;
    let l = LorentzianDosSpec::new(0.0, 0.0, 1.0, 10.0, 0.0)?;
    let det = DetectorSpec::with_decoherence(10.0)?;
    constant_checks(&c, &det, None, quick, &mut report, "constant.")?;
    lorentzian_checks(&l, &det, None, quick, &mut report, "lorentzian.")?;
    Ok(report)
}

fn constant_checks(
    c: &ConstantWidthSpec,
    det: &DetectorSpec,
    grid: Option<ReservoirGrid>,
    quick: bool,
    report: &mut ExperimentReport,
    prefix: &str,
) -> Result<(), CliError> {
    let g0 = c.gamma0();
    let small = ReservoirGrid::centered(c.e0(), 40.0 * g0, 400)?;
    let t = linear_samples(10.0 / g0, 101);
    let gen = traced_generator(&SystemSpec::Constant(*c), det, &small)?;
    let traj = evolve(&gen, &gen.initial_state(), &t, &IntegratorConfig::expm())?;
    let s00 = survival_probability(&traj)?;
    let gap = compare(&s00, &series(&t, |x| survival_constant(g0, x))?)?.max_abs;
    report.summary(&format!("{prefix}rate_vs_exponential"), gap);
    report.flag(&format!("{prefix}rate_vs_exponential"), gap < 1e-9);
    let trace = total_probability(&traj)?;
    let defect = trace.values().iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max);
    report.flag(&format!("{prefix}trace_conserved"), defect < 1e-8);

    if !quick {
        let grid = match grid {
            Some(g) => g,
            None => oracle_grid(&SystemSpec::Constant(*c))?,
        };
        let hi = (5.0 / g0).min(0.49 * grid.recurrence_time());
        let t = linear_samples(hi, 501);
        let amp = evolve_amplitudes_constant(c, &grid, &t, &OracleConfig::default())?;
        let exact = series(&t, |x| survival_constant(g0, x))?;
        let rep = compare(&window(&amp.survival(), 0.2 / g0, hi), &window(&exact, 0.2 / g0, hi))?;
        report.summary(&format!("{prefix}oracle_vs_rate"), rep.max_abs);
        report.flag(&format!("{prefix}oracle_vs_rate"), rep.max_abs < ORACLE_TOL);
    }
    Ok(())
}

fn lorentzian_checks(
    l: &LorentzianDosSpec,
    det: &DetectorSpec,
    grid: Option<ReservoirGrid>,
    quick: bool,
    report: &mut ExperimentReport,
    prefix: &str,
) -> Result<(), CliError> {
    let key = |k: &str| format!("{prefix}{k}");
    let off = DetectorSpec::off();
    let system = SystemSpec::Lorentzian(*l);
    let eps = l.e0() - l.e1();
    let small = ReservoirGrid::centered(l.e1(), 1.0, 2)?;
    let free = traced_generator(&system, &off, &small)?;
    let lifetime = decay_time(&free, &free.initial_state())?;
    report.summary(&key("decay_time_free"), lifetime);

    if l.gamma_bar() == 0.0 {
        let t = linear_samples(10.0 * lifetime, 201);
        let traj = evolve(&free, &free.initial_state(), &t, &IntegratorConfig::expm())?;
        let exact = series(&t, |x| survival_two_level(l.omega(), eps, l.gamma1(), x))?;
        let gap = compare(&survival_probability(&traj)?, &exact)?.max_abs;
        report.summary(&key("rate_vs_closed_form"), gap);
        report.flag(&key("rate_vs_closed_form"), gap < 1e-8);

        let worst = linspace(l.e0().min(l.e1()) - 20.0, l.e0().max(l.e1()) + 20.0, 101)
            .into_iter()
            .map(|e| {
                let a = spectral_density(l, &off, e)?;
                let b = unmeasured_spectrum_closed(l, e);
                Ok((a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            })
            .collect::<Result<Vec<f64>, CliError>>()?
            .into_iter()
            .fold(0.0, f64::max);
        report.summary(&key("dual_route"), worst);
        report.flag(&key("dual_route"), worst < 1e-10);

        let block = time_integrated_block(l, det)?;
        report.flag(&key("flux_identity"), (l.gamma1() * block.sbar11 - 1.0).abs() < 1e-12);
        report.flag(
            &key("coherence_integral"),
            (block.sbar01.im - 0.5 / l.omega()).abs() < 1e-12,
        );

        let watched = traced_generator(&system, det, &small)?;
        let solve = decay_time(&watched, &watched.initial_state())?;
        let closed = measured_decay_time(l.omega(), eps, l.gamma1(), det.gamma_d());
        report.summary(&key("decay_time_watched"), solve);
        let agree = [block.sbar00, closed].iter().all(|v| (v - solve).abs() <= 1e-9 * solve);
        report.flag(&key("decay_time_routes"), agree);
    }

    if !quick {
        let grid = match grid {
            Some(g) => g,
            None => oracle_grid(&system)?,
        };
        let hi = (10.0 * lifetime).min(0.49 * grid.recurrence_time());
        let t = linear_samples(hi, 301);
        let traj = evolve(&free, &free.initial_state(), &t, &IntegratorConfig::expm())?;
        let amp = evolve_amplitudes_lorentzian(l, &grid, &t, &OracleConfig::default())?;
        let rep = compare(&amp.survival(), &survival_probability(&traj)?)?;
        report.summary(&key("oracle_vs_rate"), rep.max_abs);
        report.flag(&key("oracle_vs_rate"), rep.max_abs < ORACLE_TOL);
    }
    Ok(())
}
