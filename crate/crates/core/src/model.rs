//! Physical parameters of the decaying level, the reservoir discretization and
//! the point-contact detector.
//!
//! Units: ħ = 1 and energies are measured in units of the reference coupling
//! Ω, so times are in units of 1/Ω.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} must be {requirement}, got {value}")]
    Invalid {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("{0}")]
    Inconsistent(String),
}

impl ModelError {
    fn invalid(field: &'static str, requirement: &'static str, value: f64) -> Self {
        ModelError::Invalid {
            field,
            requirement,
            value,
        }
    }

    /// Name of the offending field, when the error concerns a single field.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ModelError::Invalid { field, .. } => Some(field),
            ModelError::Inconsistent(_) => None,
        }
    }
}

fn finite(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::invalid(field, "finite", value))
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::invalid(field, "non-negative", value))
    }
}

fn positive(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::invalid(field, "positive", value))
    }
}

/// Level `E0` decaying into a flat reservoir with width `Gamma0 = 2πΩ²ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantWidthSpec {
    e0: f64,
    gamma0: f64,
}

impl ConstantWidthSpec {
    pub fn new(e0: f64, gamma0: f64) -> Result<Self, ModelError> {
        Ok(Self {
            e0: finite("E0", e0)?,
            gamma0: non_negative("Gamma0", gamma0)?,
        })
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }
}

/// Level `E0` coupled with strength `Omega` to a reservoir whose density of
/// states is a flat background `rho_bar` plus a unit-area Lorentzian of width
/// `Gamma1` centred at `E1`.
///
/// The background width `Gamma_bar = 2π Omega² rho_bar` is stored alongside
/// `rho_bar`; the rate equations use the former, spectra the latter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianDosSpec {
    e0: f64,
    e1: f64,
    omega: f64,
    gamma1: f64,
    gamma_bar: f64,
    rho_bar: f64,
}

impl LorentzianDosSpec {
    pub fn new(e0: f64, e1: f64, omega: f64, gamma1: f64, rho_bar: f64) -> Result<Self, ModelError> {
        let omega = positive("Omega", omega)?;
        let rho_bar = non_negative("rhoBar", rho_bar)?;
        Ok(Self {
            e0: finite("E0", e0)?,
            e1: finite("E1", e1)?,
            omega,
            gamma1: positive("Gamma1", gamma1)?,
            gamma_bar: 2.0 * PI * omega * omega * rho_bar,
            rho_bar,
        })
    }

    /// Same as [`LorentzianDosSpec::new`] but parameterized by the background
    /// width instead of the background density.
    pub fn with_background_width(
        e0: f64,
        e1: f64,
        omega: f64,
        gamma1: f64,
        gamma_bar: f64,
    ) -> Result<Self, ModelError> {
        let omega = positive("Omega", omega)?;
        let gamma_bar = non_negative("GammaBar", gamma_bar)?;
        let mut spec = Self::new(e0, e1, omega, gamma1, gamma_bar / (2.0 * PI * omega * omega))?;
        spec.gamma_bar = gamma_bar;
        Ok(spec)
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn e1(&self) -> f64 {
        self.e1
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    /// `E1 - E0`.
    pub fn detuning(&self) -> f64 {
        self.e1 - self.e0
    }

    /// Density of states ρ(E) of the reservoir.
    pub fn dos(&self, energy: f64) -> f64 {
        lorentzian_dos(self, energy)
    }
}

/// Either model variant of the decaying system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemSpec {
    Constant(ConstantWidthSpec),
    Lorentzian(LorentzianDosSpec),
}

/// Point-contact detector with transfer rate `D` while the dot is empty and
/// `D'` while it is occupied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    d: f64,
    d_prime: f64,
    gamma_d: f64,
}

impl DetectorSpec {
    pub fn new(d: f64, d_prime: f64) -> Result<Self, ModelError> {
        let d = non_negative("D", d)?;
        let d_prime = non_negative("Dprime", d_prime)?;
        Ok(Self {
            d,
            d_prime,
            gamma_d: decoherence_rate(d, d_prime)?,
        })
    }

    /// A detector that is switched off.
    pub fn off() -> Self {
        Self {
            d: 0.0,
            d_prime: 0.0,
            gamma_d: 0.0,
        }
    }

    /// Detector that never registers transfers while the dot is occupied,
    /// giving a decoherence rate equal to `gamma_d`.
    pub fn with_decoherence(gamma_d: f64) -> Result<Self, ModelError> {
        Self::new(non_negative("GammaD", gamma_d)?, 0.0)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn d_prime(&self) -> f64 {
        self.d_prime
    }

    pub fn gamma_d(&self) -> f64 {
        self.gamma_d
    }

    /// The larger of the two transfer rates; bounds the counting rate.
    pub fn max_rate(&self) -> f64 {
        self.d.max(self.d_prime)
    }
}

/// Decoherence rate `(√D − √D')²` generated by the point contact.
pub fn decoherence_rate(d: f64, d_prime: f64) -> Result<f64, ModelError> {
    let d = non_negative("D", d)?;
    let d_prime = non_negative("Dprime", d_prime)?;
    let diff = d.sqrt() - d_prime.sqrt();
    Ok(diff * diff)
}

/// ρ̄ + (Γ₁/2π) / ((E − E₁)² + Γ₁²/4).
pub fn lorentzian_dos(spec: &LorentzianDosSpec, energy: f64) -> f64 {
    let de = energy - spec.e1;
    let half = 0.5 * spec.gamma1;
    spec.rho_bar + (spec.gamma1 / (2.0 * PI)) / (de * de + half * half)
}

/// Uniform midpoint discretization of the reservoir energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirGrid {
    e_min: f64,
    e_max: f64,
    n_modes: usize,
}

impl ReservoirGrid {
    pub fn new(e_min: f64, e_max: f64, n_modes: usize) -> Result<Self, ModelError> {
        let e_min = finite("e_min", e_min)?;
        let e_max = finite("e_max", e_max)?;
        if e_min >= e_max {
            return Err(ModelError::Inconsistent(format!(
                "e_min ({e_min}) must be below e_max ({e_max})"
            )));
        }
        if n_modes < 2 {
            return Err(ModelError::invalid("n_modes", "at least 2", n_modes as f64));
        }
        Ok(Self { e_min, e_max, n_modes })
    }

    /// Grid of `n_modes` cells centred on `center` with total width `width`.
    pub fn centered(center: f64, width: f64, n_modes: usize) -> Result<Self, ModelError> {
        let width = positive("width", width)?;
        Self::new(center - 0.5 * width, center + 0.5 * width, n_modes)
    }

    pub fn e_min(&self) -> f64 {
        self.e_min
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn width(&self) -> f64 {
        self.e_max - self.e_min
    }

    /// Cell width δE.
    pub fn spacing(&self) -> f64 {
        self.width() / self.n_modes as f64
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.e_min + (k as f64 + 0.5) * self.spacing()
    }

    pub fn energies(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_modes).map(move |k| self.energy(k))
    }

    /// Time 2π/δE after which the discretized continuum revives.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }
}

// --- JSON configuration -----------------------------------------------------

/// `"model"` section of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Constant {
        #[serde(rename = "E0", default)]
        e0: f64,
        #[serde(rename = "Gamma0")]
        gamma0: f64,
    },
    Lorentzian {
        #[serde(rename = "E0", default)]
        e0: f64,
        #[serde(rename = "E1")]
        e1: f64,
        #[serde(rename = "Omega", default = "unit")]
        omega: f64,
        #[serde(rename = "Gamma1")]
        gamma1: f64,
        #[serde(rename = "GammaBar", default, skip_serializing_if = "Option::is_none")]
        gamma_bar: Option<f64>,
        #[serde(rename = "rhoBar", default, skip_serializing_if = "Option::is_none")]
        rho_bar: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn validate(&self) -> Result<SystemSpec, ModelError> {
        match *self {
            ModelConfig::Constant { e0, gamma0 } => Ok(SystemSpec::Constant(ConstantWidthSpec::new(e0, gamma0)?)),
            ModelConfig::Lorentzian {
                e0,
                e1,
                omega,
                gamma1,
                gamma_bar,
                rho_bar,
            } => {
                let spec = match (gamma_bar, rho_bar) {
                    (None, None) => LorentzianDosSpec::new(e0, e1, omega, gamma1, 0.0)?,
                    (None, Some(rho)) => LorentzianDosSpec::new(e0, e1, omega, gamma1, rho)?,
                    (Some(g), None) => LorentzianDosSpec::with_background_width(e0, e1, omega, gamma1, g)?,
                    (Some(g), Some(rho)) => {
                        let spec = LorentzianDosSpec::new(e0, e1, omega, gamma1, rho)?;
                        let tol = 1e-12 * spec.gamma_bar().abs().max(1.0);
                        if (spec.gamma_bar() - g).abs() > tol {
                            return Err(ModelError::Inconsistent(format!(
                                "GammaBar ({g}) must equal 2*pi*Omega^2*rhoBar ({})",
                                spec.gamma_bar()
                            )));
                        }
                        spec
                    }
                };
                Ok(SystemSpec::Lorentzian(spec))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "Dprime")]
    pub d_prime: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<DetectorSpec, ModelError> {
        DetectorSpec::new(self.d, self.d_prime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub n_modes: usize,
}

impl GridConfig {
    pub fn validate(&self) -> Result<ReservoirGrid, ModelError> {
        ReservoirGrid::new(self.e_min, self.e_max, self.n_modes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    pub n_samples: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_rtol() -> f64 {
    1e-9
}

fn default_atol() -> f64 {
    1e-12
}

impl TimeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("t_max", self.t_max)?;
        if self.n_samples < 2 {
            return Err(ModelError::invalid("n_samples", "at least 2", self.n_samples as f64));
        }
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        Ok(())
    }

    /// `n_samples` equally spaced times on `[0, t_max]`.
    pub fn samples(&self) -> Vec<f64> {
        let last = (self.n_samples - 1) as f64;
        (0..self.n_samples).map(|i| self.t_max * i as f64 / last).collect()
    }
}

/// Optional ladder depth for detector-resolved runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub n_max: usize,
}

/// Full experiment configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
}

/// Validated counterpart of [`Config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    pub system: SystemSpec,
    pub detector: DetectorSpec,
    pub grid: Option<ReservoirGrid>,
    pub time: Option<TimeConfig>,
    pub n_max: Option<usize>,
}

impl Config {
    pub fn validate(&self) -> Result<ValidatedConfig, ModelError> {
        let system = self.model.validate()?;
        let detector = match &self.detector {
            Some(d) => d.validate()?,
            None => DetectorSpec::off(),
        };
        let grid = self.grid.as_ref().map(GridConfig::validate).transpose()?;
        if let Some(t) = &self.time {
            t.validate()?;
        }
        Ok(ValidatedConfig {
            system,
            detector,
            grid,
            time: self.time,
            n_max: self.ladder.map(|l| l.n_max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoherence_rate_examples() {
        assert_eq!(decoherence_rate(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(decoherence_rate(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(decoherence_rate(4.0, 1.0).unwrap(), 1.0);
        assert!(decoherence_rate(-1.0, 1.0).is_err());
        assert!(decoherence_rate(1.0, -1e-3).is_err());
    }

    #[test]
    fn detector_populates_decoherence() {
        let det = DetectorSpec::new(1.0, 1.0).unwrap();
        assert_eq!(det.gamma_d(), 0.0);
        let det = DetectorSpec::with_decoherence(10.0).unwrap();
        assert!((det.gamma_d() - 10.0).abs() < 1e-14);
    }

    #[test]
    fn dos_peak_and_tails() {
        let spec = LorentzianDosSpec::new(0.0, 5.0, 1.0, 0.5, 0.0).unwrap();
        let peak = spec.dos(5.0);
        assert!((peak - 2.0 / (PI * 0.5)).abs() < 1e-15);
        assert!((peak - 1.2732).abs() < 1e-4);
        assert!(spec.dos(1e9) < 1e-18);
        assert!(spec.dos(-1e9) < 1e-18);
    }

    #[test]
    fn dos_has_unit_area() {
        let spec = LorentzianDosSpec::new(0.0, 5.0, 1.0, 0.5, 0.0).unwrap();
        let (lo, hi) = (5.0 - 200.0 * 0.5, 5.0 + 200.0 * 0.5);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut sum = 0.5 * (spec.dos(lo) + spec.dos(hi));
        for k in 1..n {
            sum += spec.dos(lo + k as f64 * h);
        }
        assert!((sum * h - 1.0).abs() < 2e-3);
    }

    #[test]
    fn background_width_is_derived() {
        let spec = LorentzianDosSpec::new(0.0, 0.0, 2.0, 1.0, 0.25).unwrap();
        assert!((spec.gamma_bar() - 2.0 * PI * 4.0 * 0.25).abs() < 1e-15);
        let back = LorentzianDosSpec::with_background_width(0.0, 0.0, 2.0, 1.0, spec.gamma_bar()).unwrap();
        assert!((back.rho_bar() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_fields() {
        let err = LorentzianDosSpec::new(0.0, 0.0, 1.0, -1.0, 0.0).unwrap_err();
        assert_eq!(err.field(), Some("Gamma1"));
        assert_eq!(err.to_string(), "Gamma1 must be positive, got -1");
        assert!(ConstantWidthSpec::new(f64::NAN, 1.0).is_err());
        assert!(ConstantWidthSpec::new(0.0, -1.0).is_err());
        assert!(ReservoirGrid::new(1.0, 1.0, 10).is_err());
        assert!(ReservoirGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn grid_is_midpoint() {
        let grid = ReservoirGrid::new(-1.0, 1.0, 4).unwrap();
        let e: Vec<f64> = grid.energies().collect();
        assert_eq!(e, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(grid.spacing(), 0.5);
    }

    #[test]
    fn validated_config_collects_sections() {
        let cfg = Config {
            model: ModelConfig::Lorentzian {
                e0: 0.0,
                e1: 5.0,
                omega: 1.0,
                gamma1: 0.5,
                gamma_bar: None,
                rho_bar: None,
            },
            detector: Some(DetectorConfig { d: 10.0, d_prime: 0.0 }),
            grid: Some(GridConfig {
                e_min: -10.0,
                e_max: 15.0,
                n_modes: 100,
            }),
            time: Some(TimeConfig {
                t_max: 10.0,
                n_samples: 11,
                rtol: 1e-9,
                atol: 1e-12,
            }),
            ladder: None,
        };
        let v = cfg.validate().unwrap();
        assert!(matches!(v.system, SystemSpec::Lorentzian(_)));
        assert!((v.detector.gamma_d() - 10.0).abs() < 1e-14);
        assert_eq!(v.time.unwrap().samples()[1], 1.0);
        assert_eq!(v.grid.unwrap().n_modes(), 100);
    }

    #[test]
    fn inconsistent_background_is_rejected() {
        let cfg = ModelConfig::Lorentzian {
            e0: 0.0,
            e1: 0.0,
            omega: 1.0,
            gamma1: 1.0,
            gamma_bar: Some(1.0),
            rho_bar: Some(1.0),
        };
        assert!(matches!(cfg.validate(), Err(ModelError::Inconsistent(_))));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decoherence_symmetric(d in 0.0f64..100.0, dp in 0.0f64..100.0) {
            let a = decoherence_rate(d, dp).unwrap();
            let b = decoherence_rate(dp, d).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn decoherence_with_silent_branch(d in 0.0f64..100.0) {
            let g = decoherence_rate(d, 0.0).unwrap();
            prop_assert!((g - d).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn even_grids_are_symmetric(lo in -50.0f64..0.0, w in 0.1f64..100.0, half in 1usize..200) {
            let grid = ReservoirGrid::new(lo, lo + w, 2 * half).unwrap();
            let mid = 0.5 * (grid.e_min() + grid.e_max());
            let n = grid.n_modes();
            for k in 0..n / 2 {
                let a = grid.energy(k) - mid;
                let b = grid.energy(n - 1 - k) - mid;
                prop_assert!((a + b).abs() < 1e-9 * w.max(1.0));
            }
            let e: Vec<f64> = grid.energies().collect();
            prop_assert!(e.windows(2).all(|p| p[1] > p[0]));
        }
    }
}
