//! Closed-form survival probabilities, decay times and line shapes.
//!
//! Arguments follow the physics notation: `omega` is the dot-resonance
//! coupling Ω, `eps01 = E0 − E1`, `gamma1` the resonance width Γ₁ and
//! `gamma_d` the detector decoherence rate Γ_d.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::model::LorentzianDosSpec;

/// `σ₀₀(t) = e^{−Γ₀t}`.
pub fn survival_constant(gamma0: f64, t: f64) -> f64 {
    (-gamma0 * t).exp()
}

/// Occupation of a single reservoir mode for the constant-width model:
/// `Ω_α²/(ε² + Γ₀²/4) · (1 − 2cos(εt)e^{−Γ₀t/2} + e^{−Γ₀t})` with `ε = E_α − E0`.
pub fn mode_occupation_constant(gamma0: f64, e0: f64, e_alpha: f64, omega_alpha: f64, t: f64) -> f64 {
    let eps = e_alpha - e0;
    let half = 0.5 * gamma0;
    let bracket = 1.0 - 2.0 * (eps * t).cos() * (-half * t).exp() + (-gamma0 * t).exp();
    omega_alpha * omega_alpha / (eps * eps + half * half) * bracket
}

/// `ω = √((Γ₁ + 2iε₀₁)² − 16Ω²)`, principal branch.
pub fn two_level_discriminant(omega: f64, eps01: f64, gamma1: f64) -> Complex64 {
    let z = Complex64::new(gamma1, 2.0 * eps01);
    (z * z - 16.0 * omega * omega).sqrt()
}

/// Survival probability of a level coupled with `Ω` to a resonance of width
/// `Γ₁` detuned by `ε₀₁` (no background width).
pub fn survival_two_level(omega: f64, eps01: f64, gamma1: f64, t: f64) -> f64 {
    let w = two_level_discriminant(omega, eps01, gamma1);
    survival_two_level_with(w, omega, eps01, gamma1, t)
}

/// Same as [`survival_two_level`] with an explicit choice of `ω` (either
/// square root gives the same value).
pub fn survival_two_level_with(w: Complex64, omega: f64, eps01: f64, gamma1: f64, t: f64) -> f64 {
    let z = Complex64::new(gamma1, 2.0 * eps01);
    let scale = gamma1.max(2.0 * eps01.abs()).max(4.0 * omega);
    let amp = if w.norm() < 1e-8 * scale {
        // Removable 1/ω singularity: expand cosh(s) + (zt/4)·sinh(s)/s to
        // fourth order in ω, with s = ωt/4.
        let s = w * (0.25 * t);
        let s2 = s * s;
        let s4 = s2 * s2;
        let cosh = 1.0 + s2 / 2.0 + s4 / 24.0;
        let sinhc = 1.0 + s2 / 6.0 + s4 / 120.0;
        (cosh + z * (0.25 * t) * sinhc) * (-0.25 * gamma1 * t).exp()
    } else {
        // ((z+ω)/2ω)e₋ − ((z−ω)/2ω)e₊, regrouped so that t = 0 gives exactly 1.
        let slow = (-(gamma1 - w) * (0.25 * t)).exp();
        let fast = (-(gamma1 + w) * (0.25 * t)).exp();
        0.5 * (slow + fast) + z / (2.0 * w) * (slow - fast)
    };
    amp.norm_sqr()
}

/// Long-time exponential law for `Γ₁ ≫ Ω`: `exp(−4Ω²t/Γ₁)`.
pub fn survival_exponential_limit(omega: f64, gamma1: f64, t: f64) -> f64 {
    (-4.0 * omega * omega * t / gamma1).exp()
}

/// Mean decay time `T = τ/(1 + τΓ̄)` with
/// `τ = 1/Γ₁ + (4ε₁₀² + (Γ̄+Γ₁)²)/(4Ω²(Γ̄+Γ₁))`.
pub fn decay_time_closed(spec: &LorentzianDosSpec) -> f64 {
    let gb = spec.gamma_bar();
    let g = gb + spec.gamma1();
    let eps = spec.detuning();
    let omega2 = spec.omega() * spec.omega();
    let tau = 1.0 / spec.gamma1() + (4.0 * eps * eps + g * g) / (4.0 * omega2 * g);
    tau / (1.0 + tau * gb)
}

/// Decay exponent under measurement, `4(Γ₁+Γ_d)Ω²/(4ε₀₁² + (Γ₁+Γ_d)²)`.
/// Derived for `Γ₁ ≫ Ω`; see [`exponent_is_asymptotic`].
pub fn measured_exponent(omega: f64, eps01: f64, gamma1: f64, gamma_d: f64) -> f64 {
    let g = gamma1 + gamma_d;
    4.0 * g * omega * omega / (4.0 * eps01 * eps01 + g * g)
}

/// Whether the widths are large enough (`Γ₁ + Γ_d ≥ 5Ω`) for
/// [`measured_exponent`] to describe the decay.
pub fn exponent_is_asymptotic(omega: f64, gamma1: f64, gamma_d: f64) -> bool {
    gamma1 + gamma_d >= 5.0 * omega
}

/// Mean decay time under measurement, `1/Γ₁ + (4ε₀₁² + (Γ₁+Γ_d)²)/(4Ω²(Γ₁+Γ_d))`.
pub fn measured_decay_time(omega: f64, eps01: f64, gamma1: f64, gamma_d: f64) -> f64 {
    let g = gamma1 + gamma_d;
    1.0 / gamma1 + (4.0 * eps01 * eps01 + g * g) / (4.0 * omega * omega * g)
}

/// `∂T/∂Γ_d`; positive (Zeno) iff `(Γ₁+Γ_d)² > 4ε₀₁²`.
pub fn measured_decay_time_slope(omega: f64, eps01: f64, gamma1: f64, gamma_d: f64) -> f64 {
    let g = gamma1 + gamma_d;
    (1.0 - 4.0 * eps01 * eps01 / (g * g)) / (4.0 * omega * omega)
}

/// Energy distribution for aligned levels (`E0 = E1`) under measurement,
/// with `eps = E_α − E0`.
pub fn measured_spectrum_aligned(omega: f64, gamma1: f64, gamma_d: f64, eps: f64) -> f64 {
    let o2 = omega * omega;
    let c = gamma1 * gamma_d + 4.0 * o2;
    let e2 = eps * eps;
    let num = 2.0 * (gamma1 + gamma_d) * c / PI;
    let den = 16.0 * e2 * e2 + 4.0 * e2 * (gamma1 * gamma1 + gamma_d * gamma_d - 8.0 * o2) + c * c;
    num / den
}

/// Lorentzian limit of the unmeasured line for `Γ₁ ≫ Ω`: width `4Ω²/Γ₁`
/// centred on `E0`.
pub fn occ_limit_lorentzian(omega: f64, gamma1: f64, e0: f64, e_alpha: f64) -> f64 {
    let width = 4.0 * omega * omega / gamma1;
    let eps = e_alpha - e0;
    width / (2.0 * PI) / (eps * eps + 0.25 * width * width)
}
