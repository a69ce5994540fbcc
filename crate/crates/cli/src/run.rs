use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use zenodyn::analytic::{decay_time_closed, measured_decay_time};
use zenodyn::dynamics::{
    decay_time, default_samples, default_t_max, detector_current, evolve, grid_probability, survival_probability,
    top_rung_mass, total_probability, IntegratorConfig,
};
use zenodyn::generator::{
    build_ladder_constant, build_ladder_lorentzian, build_measured_constant, build_measured_lorentzian,
    build_unmeasured_lorentzian, ladder_depth, Generator,
};
use zenodyn::model::{
    Config, ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid, SystemSpec, ValidatedConfig,
};
use zenodyn::spectrum::{constant_spectrum_closed, linspace, normalized_spectrum, time_integrated_block, Spectrum};

use crate::csv::{ensure_dir, write_text, Table};
use crate::validate::validate_model;
use crate::{CliError, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Decay,
    Spectrum,
    DecayTime,
    Ladder,
    Validate,
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "decay" => Command::Decay,
            "spectrum" => Command::Spectrum,
            "decaytime" => Command::DecayTime,
            "ladder" => Command::Ladder,
            "validate" => Command::Validate,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown command '{other}' (expected decay, spectrum, decaytime, ladder or validate)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Zeno,
    AntiZeno,
    Neutral,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Zeno => "zeno",
            Regime::AntiZeno => "anti-zeno",
            Regime::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the detector lengthens (Zeno) or shortens (anti-Zeno) the mean
/// lifetime of the Lorentzian model.
pub fn classify_regime(spec: &LorentzianDosSpec, det: &DetectorSpec) -> Result<Regime, CliError> {
    if spec.gamma_bar() != 0.0 {
        return Err(CliError::Usage("regime classification needs GammaBar = 0".into()));
    }
    let eps = spec.e0() - spec.e1();
    let base = measured_decay_time(spec.omega(), eps, spec.gamma1(), 0.0);
    let watched = measured_decay_time(spec.omega(), eps, spec.gamma1(), det.gamma_d());
    let diff = watched - base;
    Ok(if diff.abs() < 1e-9 * base {
        Regime::Neutral
    } else if diff > 0.0 {
        Regime::Zeno
    } else {
        Regime::AntiZeno
    })
}

pub(crate) fn load_config(path: &Path) -> Result<ValidatedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: Config = serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(cfg.validate()?)
}

/// Grid used when the config has none: about 40 line widths wide with
/// 10–40 modes per width.
pub(crate) fn default_grid(system: &SystemSpec, det: &DetectorSpec) -> Result<ReservoirGrid, CliError> {
    Ok(match system {
        SystemSpec::Constant(c) => ReservoirGrid::centered(c.e0(), 40.0 * c.gamma0(), 1600)?,
        SystemSpec::Lorentzian(l) => {
            let width = 2.0 * l.detuning().abs() + 20.0 * (l.gamma1() + det.gamma_d() + l.omega() + l.gamma_bar());
            let de = 0.1 * l.gamma1().min(l.omega());
            let n = ((width / de).ceil() as usize).clamp(2, 20_000);
            ReservoirGrid::centered(0.5 * (l.e0() + l.e1()), width, n)?
        }
    })
}

pub(crate) fn traced_generator(
    system: &SystemSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
) -> Result<Generator, CliError> {
    Ok(match system {
        SystemSpec::Constant(c) => build_measured_constant(c, det, grid)?,
        SystemSpec::Lorentzian(l) if l.gamma_bar() > 0.0 && det.gamma_d() == 0.0 => {
            build_unmeasured_lorentzian(l, grid)?
        }
        SystemSpec::Lorentzian(l) => build_measured_lorentzian(l, det, grid)?,
    })
}

fn echo_params(report: &mut ExperimentReport, system: &SystemSpec, det: &DetectorSpec, grid: Option<&ReservoirGrid>) {
    match system {
        SystemSpec::Constant(c) => {
            report.param("E0", c.e0());
            report.param("Gamma0", c.gamma0());
        }
        SystemSpec::Lorentzian(l) => {
            report.param("E0", l.e0());
            report.param("E1", l.e1());
            report.param("Omega", l.omega());
            report.param("Gamma1", l.gamma1());
            report.param("GammaBar", l.gamma_bar());
        }
    }
    report.param("D", det.d());
    report.param("Dprime", det.d_prime());
    report.param("GammaD", det.gamma_d());
    if let Some(g) = grid {
        report.param("e_min", g.e_min());
        report.param("e_max", g.e_max());
        report.param("n_modes", g.n_modes() as f64);
    }
}

fn integrator(cfg: &ValidatedConfig) -> IntegratorConfig {
    match cfg.time {
        Some(t) => IntegratorConfig {
            rtol: t.rtol,
            atol: t.atol,
            ..IntegratorConfig::expm()
        },
        None => IntegratorConfig::expm(),
    }
}

fn samples(cfg: &ValidatedConfig, lifetime: f64) -> Vec<f64> {
    match cfg.time {
        Some(t) => t.samples(),
        None => default_samples(default_t_max(lifetime)),
    }
}

/// Loads `config`, runs `command` and writes its outputs into `outdir`.
pub fn run_config(config: &Path, command: Command, outdir: &Path) -> Result<ExperimentReport, CliError> {
    let cfg = load_config(config)?;
    ensure_dir(outdir)?;
    let report = match command {
        Command::Decay => decay(&cfg, outdir)?,
        Command::Spectrum => spectrum(&cfg, outdir)?,
        Command::DecayTime => decaytime(&cfg, outdir)?,
        Command::Ladder => ladder(&cfg, outdir)?,
        Command::Validate => validate_model(&cfg.system, &cfg.detector, cfg.grid, false)?,
    };
    report.write_json(outdir)?;
    Ok(report)
}

fn decay(cfg: &ValidatedConfig, outdir: &Path) -> Result<ExperimentReport, CliError> {
    let grid = cfg.grid.unwrap_or(default_grid(&cfg.system, &cfg.detector)?);
    let gen = traced_generator(&cfg.system, &cfg.detector, &grid)?;
    let x0 = gen.initial_state();
    let lifetime = decay_time(&gen, &x0)?;
    let t = samples(cfg, lifetime);
    let traj = evolve(&gen, &x0, &t, &integrator(cfg))?;
    let s00 = survival_probability(&traj)?;
    let trace = total_probability(&traj)?;
    let on_grid = grid_probability(&traj)?;

    let mut report = ExperimentReport::new("decay");
    echo_params(&mut report, &cfg.system, &cfg.detector, Some(&grid));
    Table::new()
        .meta("variant", gen.variant().name())
        .meta("hash", gen.params_hash())
        .column("t", &t)
        .column("sigma00", s00.values())
        .column("trace", trace.values())
        .column("grid_trace", on_grid.values())
        .write(&outdir.join("decay.csv"))?;
    report.file("decay.csv");
    report.summary("decay_time", lifetime);
    report.summary("sigma00_final", *s00.values().last().unwrap_or(&f64::NAN));
    let defect = |v: &[f64]| v.iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max);
    report.summary("trace_defect", defect(trace.values()));
    report.summary("grid_trace_defect", defect(on_grid.values()));
    report.flag("trace_conserved", defect(trace.values()) < 1e-8);
    Ok(report)
}

fn spectrum(cfg: &ValidatedConfig, outdir: &Path) -> Result<ExperimentReport, CliError> {
    let s = match &cfg.system {
        SystemSpec::Lorentzian(l) => normalized_spectrum(l, &cfg.detector)?,
        SystemSpec::Constant(c) => constant_line(c, &cfg.detector)?,
    };
    let mut report = ExperimentReport::new("spectrum");
    echo_params(&mut report, &cfg.system, &cfg.detector, None);
    let path = outdir.join("spectrum.csv");
    let mut buf = Vec::new();
    s.write_csv(&mut buf).map_err(|e| CliError::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
    report.file("spectrum.csv");
    report.summary("integral", s.integral());
    if let Ok(w) = s.fwhm() {
        report.summary("fwhm", w);
    }
    for (i, p) in s.peaks().iter().enumerate() {
        report.summary(&format!("peak{i}_energy"), p.energy);
        report.summary(&format!("peak{i}_height"), p.height);
    }
    report.flag("normalized", (s.integral() - 1.0).abs() < 1e-3);
    Ok(report)
}

/// Closed-form constant-width line sampled densely enough for its width.
fn constant_line(c: &ConstantWidthSpec, det: &DetectorSpec) -> Result<Spectrum, CliError> {
    let w = c.gamma0() + det.gamma_d();
    // Lorentzian tails beyond ±L hold w/(πL) of the mass.
    let half = 2000.0 * w;
    let core = linspace(c.e0() - 20.0 * w, c.e0() + 20.0 * w, 8001);
    let mut e: Vec<f64> = linspace(-half, half, 40001).into_iter().map(|x| x + c.e0()).collect();
    e.extend(core);
    e.sort_by(f64::total_cmp);
    e.dedup();
    Ok(
        Spectrum::sample("measured_constant", e, |x| constant_spectrum_closed(c, det, x))?.with_params(vec![
            ("E0".into(), c.e0()),
            ("Gamma0".into(), c.gamma0()),
            ("GammaD".into(), det.gamma_d()),
        ]),
    )
}

fn decaytime(cfg: &ValidatedConfig, outdir: &Path) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::new("decaytime");
    echo_params(&mut report, &cfg.system, &cfg.detector, None);
    let mut routes: Vec<(&str, f64)> = Vec::new();
    let grid = match &cfg.system {
        SystemSpec::Constant(c) => {
            routes.push(("closed_form", 1.0 / c.gamma0()));
            ReservoirGrid::centered(c.e0(), 1.0, 2)?
        }
        SystemSpec::Lorentzian(l) => {
            if l.gamma_bar() == 0.0 {
                let eps = l.e0() - l.e1();
                routes.push((
                    "closed_form",
                    measured_decay_time(l.omega(), eps, l.gamma1(), cfg.detector.gamma_d()),
                ));
                routes.push(("time_integrated_block", time_integrated_block(l, &cfg.detector)?.sbar00));
                report.summary(
                    "regime_sign",
                    match classify_regime(l, &cfg.detector)? {
                        Regime::Zeno => 1.0,
                        Regime::AntiZeno => -1.0,
                        Regime::Neutral => 0.0,
                    },
                );
            } else if cfg.detector.gamma_d() == 0.0 {
                routes.push(("closed_form", decay_time_closed(l)));
            }
            ReservoirGrid::centered(l.e1(), 1.0, 2)?
        }
    };
    // σ₀₀'s closure never reaches the grid, so a two-mode grid is exact here.
    let gen = traced_generator(&cfg.system, &cfg.detector, &grid)?;
    routes.push(("linear_solve", decay_time(&gen, &gen.initial_state())?));

    let mut text = String::from("route,T\n");
    for (name, v) in &routes {
        text.push_str(&format!("{name},{v:.16e}\n"));
        report.summary(&format!("T_{name}"), *v);
    }
    write_text(&outdir.join("decaytime.csv"), &text)?;
    report.file("decaytime.csv");
    let reference = routes[0].1;
    let agree = routes
        .iter()
        .all(|(_, v)| (v - reference).abs() <= 1e-9 * reference.abs());
    report.flag("routes_agree", agree);
    Ok(report)
}

fn ladder(cfg: &ValidatedConfig, outdir: &Path) -> Result<ExperimentReport, CliError> {
    let grid = cfg.grid.unwrap_or(default_grid(&cfg.system, &cfg.detector)?);
    let traced = traced_generator(&cfg.system, &cfg.detector, &grid)?;
    let lifetime = decay_time(&traced, &traced.initial_state())?;
    let t = samples(cfg, lifetime);
    let t_max = *t.last().unwrap_or(&0.0);
    let n_max = cfg.n_max.unwrap_or_else(|| ladder_depth(&cfg.detector, t_max));
    let gen = match &cfg.system {
        SystemSpec::Constant(c) => build_ladder_constant(c, &cfg.detector, &grid, n_max)?,
        SystemSpec::Lorentzian(l) => build_ladder_lorentzian(l, &cfg.detector, &grid, n_max)?,
    };
    let traj = evolve(&gen, &gen.initial_state(), &t, &integrator(cfg))?;
    let s00 = survival_probability(&traj)?;
    let trace = total_probability(&traj)?;
    let current = detector_current(&traj, &cfg.detector)?;
    let top = top_rung_mass(&traj)?;

    let mut report = ExperimentReport::new("ladder");
    echo_params(&mut report, &cfg.system, &cfg.detector, Some(&grid));
    report.param("n_max", n_max as f64);
    Table::new()
        .meta("variant", gen.variant().name())
        .meta("hash", gen.params_hash())
        .column("t", &t)
        .column("sigma00", s00.values())
        .column("trace", trace.values())
        .column("mean_count", current.mean_count.values())
        .column("current", current.rate.values())
        .column("top_rung", top.values())
        .write(&outdir.join("ladder.csv"))?;
    report.file("ladder.csv");

    let last = traj.times().len() - 1;
    let rungs: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
    let pn = traj.rung_populations(last);
    Table::new()
        .meta("t", t_max)
        .column("n", &rungs)
        .column("P_n", &pn)
        .write(&outdir.join("ladder_rungs.csv"))?;
    report.file("ladder_rungs.csv");

    let top_max = top.values().iter().copied().fold(0.0, f64::max);
    report.summary(
        "mean_count_final",
        *current.mean_count.values().last().unwrap_or(&f64::NAN),
    );
    report.summary("top_rung_mass_max", top_max);
    report.summary("decay_time", lifetime);
    report.flag("ladder_deep_enough", top_max < 1e-10);
    report.flag("trace_conserved", trace.values().iter().all(|p| (p - 1.0).abs() < 1e-8));
    Ok(report)
}
