use std::collections::BTreeMap;

use zenodyn::analytic::*;
use zenodyn::model::{decoherence_rate, lorentzian_dos, DetectorSpec, LorentzianDosSpec};

use crate::run::classify_regime;
use crate::CliError;

pub const ANALYTIC_NAMES: [&str; 12] = [
    "survival_constant",
    "mode_occupation_constant",
    "survival_two_level",
    "survival_exponential_limit",
    "decay_time_closed",
    "measured_exponent",
    "measured_decay_time",
    "measured_spectrum_aligned",
    "occ_limit_lorentzian",
    "decoherence_rate",
    "lorentzian_dos",
    "classify_regime",
];

/// Parses `key=value` pairs.
pub fn parse_params<S: AsRef<str>>(items: &[S]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let item = item.as_ref();
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{item}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("'{k}' is not a number: '{v}'")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

struct Params<'a>(&'a BTreeMap<String, f64>);

impl Params<'_> {
    fn get(&self, key: &str) -> Result<f64, CliError> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("missing parameter '{key}'")))
    }

    fn or(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }
}

fn lorentzian(p: &Params) -> Result<LorentzianDosSpec, CliError> {
    let (e0, e1, omega, g1) = (p.or("E0", 0.0), p.get("E1")?, p.or("Omega", 1.0), p.get("Gamma1")?);
    Ok(match (p.0.get("GammaBar"), p.0.get("rhoBar")) {
        (Some(&gb), _) => LorentzianDosSpec::with_background_width(e0, e1, omega, g1, gb)?,
        (None, rho) => LorentzianDosSpec::new(e0, e1, omega, g1, rho.copied().unwrap_or(0.0))?,
    })
}

/// Evaluates the closed form `name`; numbers are printed with full precision.
pub fn evaluate_analytic(name: &str, params: &BTreeMap<String, f64>) -> Result<String, CliError> {
    let p = Params(params);
    let v = match name {
        "survival_constant" => survival_constant(p.get("Gamma0")?, p.get("t")?),
        "mode_occupation_constant" => mode_occupation_constant(
            p.get("Gamma0")?,
            p.or("E0", 0.0),
            p.get("E_alpha")?,
            p.get("Omega_alpha")?,
            p.get("t")?,
        ),
        "survival_two_level" => survival_two_level(p.or("Omega", 1.0), p.get("eps01")?, p.get("Gamma1")?, p.get("t")?),
        "survival_exponential_limit" => survival_exponential_limit(p.or("Omega", 1.0), p.get("Gamma1")?, p.get("t")?),
        "decay_time_closed" => decay_time_closed(&lorentzian(&p)?),
        "measured_exponent" => {
            measured_exponent(p.or("Omega", 1.0), p.get("eps01")?, p.get("Gamma1")?, p.get("GammaD")?)
        }
        "measured_decay_time" => {
            measured_decay_time(p.or("Omega", 1.0), p.get("eps01")?, p.get("Gamma1")?, p.get("GammaD")?)
        }
        "measured_spectrum_aligned" => {
            measured_spectrum_aligned(p.or("Omega", 1.0), p.get("Gamma1")?, p.get("GammaD")?, p.get("eps")?)
        }
        "occ_limit_lorentzian" => {
            occ_limit_lorentzian(p.or("Omega", 1.0), p.get("Gamma1")?, p.or("E0", 0.0), p.get("E_alpha")?)
        }
        "decoherence_rate" => decoherence_rate(p.get("D")?, p.get("Dprime")?)?,
        "lorentzian_dos" => lorentzian_dos(&lorentzian(&p)?, p.get("E")?),
        "classify_regime" => {
            let det = DetectorSpec::with_decoherence(p.get("GammaD")?)?;
            return Ok(classify_regime(&lorentzian(&p)?, &det)?.to_string());
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown closed form '{other}' (expected one of {})",
                ANALYTIC_NAMES.join(", ")
            )))
        }
    };
    Ok(format!("{v:.16e}"))
}
