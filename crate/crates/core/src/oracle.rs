//! Brute-force reference: Schrödinger amplitudes of the level coupled to a
//! discretized continuum, `i ḃ = H b`, with no density-matrix reduction and
//! no wide-band elimination.
//!
//! Propagation uses a Chebyshev expansion of `e^{−iHΔt}` between samples,
//! which is independent of the integrators in [`crate::dynamics`].

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::TimeSeries;
use crate::model::{ConstantWidthSpec, LorentzianDosSpec, ReservoirGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid recurrence horizon exceeded: t = {t} but the guard is {horizon}")]
    RecurrenceHorizon { t: f64, horizon: f64 },
    #[error("sample times must be finite, non-negative and strictly increasing")]
    Samples,
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Chebyshev terms are dropped once `|J_k|` falls below this.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { tol: 1e-15 }
    }
}

/// Real symmetric Hamiltonian: diagonal energies plus hopping links.
#[derive(Debug, Clone)]
struct Hamiltonian {
    diag: Vec<f64>,
    links: Vec<(usize, usize, f64)>,
}

impl Hamiltonian {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = xi * d;
        }
        for &(i, j, g) in &self.links {
            y[i] += x[j] * g;
            y[j] += x[i] * g;
        }
    }

    /// Gershgorin enclosure of the spectrum.
    fn bounds(&self) -> (f64, f64) {
        let mut radius = vec![0.0; self.diag.len()];
        for &(i, j, g) in &self.links {
            radius[i] += g.abs();
            radius[j] += g.abs();
        }
        let lo = self
            .diag
            .iter()
            .zip(&radius)
            .map(|(d, r)| d - r)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .diag
            .iter()
            .zip(&radius)
            .map(|(d, r)| d + r)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// `J_0(x) … J_n(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_2k = 1`.
fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return out;
    }
    let start = n.max(x.ceil() as usize) + 30 + (6.0 * x.cbrt()).ceil() as usize;
    let start = start + start % 2;
    let mut out = vec![0.0; n + 1];
    let (mut above, mut here) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k <= n {
            out[k] = here;
        }
        if k % 2 == 0 {
            norm += if k == 0 { here } else { 2.0 * here };
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * k as f64 / x * here - above;
        above = here;
        here = below;
        if here.abs() > 1e250 {
            here *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// `b ← e^{−iHΔt} b`.
fn chebyshev_step(h: &Hamiltonian, bounds: (f64, f64), dt: f64, b: &mut [Complex64], tol: f64) {
    let (lo, hi) = bounds;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let x = half * dt;
    let kmax = (x + 20.0 + 10.0 * x.cbrt()).ceil() as usize;
    let jk = bessel_j_sequence(x, kmax);
    let n = b.len();
    // Hn v = (H − mid)/half · v
    let scaled = |v: &[Complex64], out: &mut [Complex64]| {
        h.apply(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = (*o - vi * mid) / half;
        }
    };
    let mut prev: Vec<Complex64> = b.to_vec();
    let mut cur = vec![Complex64::new(0.0, 0.0); n];
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    scaled(&prev, &mut cur);
    let mut acc: Vec<Complex64> = prev.iter().map(|v| v * jk[0]).collect();
    let mut phase = Complex64::new(0.0, -1.0);
    for (k, &j) in jk.iter().enumerate().skip(1) {
        let c = phase * (2.0 * j);
        for (a, v) in acc.iter_mut().zip(&cur) {
            *a += v * c;
        }
        if k as f64 > x && j.abs() < tol {
            break;
        }
        scaled(&cur, &mut next);
        for (nx, p) in next.iter_mut().zip(&prev) {
            *nx = 2.0 * *nx - p;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        phase *= Complex64::new(0.0, -1.0);
    }
    let global = Complex64::from_polar(1.0, -mid * dt);
    for (bi, a) in b.iter_mut().zip(acc) {
        *bi = a * global;
    }
}

/// Amplitude snapshots `(b₀, [b₁], b_β …)`.
#[derive(Debug, Clone)]
pub struct AmplitudeSeries {
    times: Vec<f64>,
    states: Vec<Vec<Complex64>>,
    has_aux: bool,
    grid: ReservoirGrid,
}

impl AmplitudeSeries {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid(&self) -> &ReservoirGrid {
        &self.grid
    }

    pub fn b0(&self, k: usize) -> Complex64 {
        self.states[k][0]
    }

    pub fn b1(&self, k: usize) -> Option<Complex64> {
        self.has_aux.then(|| self.states[k][1])
    }

    fn first_mode(&self) -> usize {
        if self.has_aux {
            2
        } else {
            1
        }
    }

    /// Amplitudes on the grid attached to the decaying channel at sample `k`.
    pub fn modes(&self, k: usize) -> &[Complex64] {
        let a = self.first_mode();
        &self.states[k][a..a + self.grid.n_modes()]
    }

    /// `|b₀(t)|²` under the channel name used by the rate equations.
    pub fn survival(&self) -> TimeSeries {
        let v = (0..self.times.len()).map(|k| self.b0(k).norm_sqr()).collect();
        TimeSeries::new("sigma00", self.times.clone(), v).expect("validated samples")
    }

    /// `Σ|b|²`.
    pub fn norm(&self) -> TimeSeries {
        let v = self
            .states
            .iter()
            .map(|s| s.iter().map(|b| b.norm_sqr()).sum())
            .collect();
        TimeSeries::new("norm", self.times.clone(), v).expect("validated samples")
    }

    /// `|b_β|²/δE` at sample `k`, a probability density in energy.
    pub fn energy_profile(&self, k: usize) -> Vec<f64> {
        let de = self.grid.spacing();
        self.modes(k).iter().map(|b| b.norm_sqr() / de).collect()
    }
}

fn check(t_samples: &[f64], grid: &ReservoirGrid, cfg: &OracleConfig) -> Result<(), OracleError> {
    if !(cfg.tol > 0.0 && cfg.tol < 1e-3) {
        return Err(OracleError::Config(format!(
            "tol must be in (0, 1e-3), got {}",
            cfg.tol
        )));
    }
    let ok = t_samples.iter().all(|t| t.is_finite())
        && t_samples.first().is_none_or(|&t| t >= 0.0)
        && t_samples.windows(2).all(|w| w[1] > w[0]);
    if !ok {
        return Err(OracleError::Samples);
    }
    let horizon = 0.5 * grid.recurrence_time();
    if let Some(&t) = t_samples.last() {
        if t >= horizon {
            return Err(OracleError::RecurrenceHorizon { t, horizon });
        }
    }
    Ok(())
}

fn propagate(
    h: &Hamiltonian,
    b0: Vec<Complex64>,
    t_samples: &[f64],
    cfg: &OracleConfig,
    has_aux: bool,
    grid: ReservoirGrid,
) -> AmplitudeSeries {
    let bounds = h.bounds();
    // Keep each Chebyshev argument moderate so the expansion stays short.
    let max_dt = 50.0 / (0.5 * (bounds.1 - bounds.0)).max(1e-300);
    let mut b = b0;
    let mut t = 0.0;
    let mut states = Vec::with_capacity(t_samples.len());
    for &ts in t_samples {
        let span = ts - t;
        if span > 0.0 {
            let pieces = (span / max_dt).ceil().max(1.0) as usize;
            let dt = span / pieces as f64;
            for _ in 0..pieces {
                chebyshev_step(h, bounds, dt, &mut b, cfg.tol);
            }
        }
        t = ts;
        states.push(b.clone());
    }
    AmplitudeSeries {
        times: t_samples.to_vec(),
        states,
        has_aux,
        grid,
    }
}

/// Level `E0` coupled to every grid mode with `Ω_α = √(Γ₀δE/2π)`:
/// `i ḃ₀ = E₀b₀ + Σ_α Ω_α b_α`, `i ḃ_α = E_α b_α + Ω_α b₀`.
pub fn evolve_amplitudes_constant(
    spec: &ConstantWidthSpec,
    grid: &ReservoirGrid,
    t_samples: &[f64],
    cfg: &OracleConfig,
) -> Result<AmplitudeSeries, OracleError> {
    check(t_samples, grid, cfg)?;
    let g = (spec.gamma0() * grid.spacing() / (2.0 * PI)).sqrt();
    let mut diag = vec![spec.e0()];
    diag.extend(grid.energies());
    let links = if g == 0.0 {
        Vec::new()
    } else {
        (0..grid.n_modes()).map(|a| (0, a + 1, g)).collect()
    };
    let h = Hamiltonian { diag, links };
    let mut b = vec![Complex64::new(0.0, 0.0); h.diag.len()];
    b[0] = Complex64::new(1.0, 0.0);
    Ok(propagate(&h, b, t_samples, cfg, false, *grid))
}

/// Lorentzian reservoir realized as an auxiliary level `E1` hybridized with a
/// flat continuum of width `Γ₁`; the level `E0` couples to `E1` with `Ω` and,
/// when `Γ̄ > 0`, to a separate flat background continuum of width `Γ̄`.
/// The energy profile of the `E1` continuum is the tunnelled-electron line.
pub fn evolve_amplitudes_lorentzian(
    spec: &LorentzianDosSpec,
    grid: &ReservoirGrid,
    t_samples: &[f64],
    cfg: &OracleConfig,
) -> Result<AmplitudeSeries, OracleError> {
    check(t_samples, grid, cfg)?;
    let n = grid.n_modes();
    let de = grid.spacing();
    let g1 = (spec.gamma1() * de / (2.0 * PI)).sqrt();
    let gb = (spec.gamma_bar() * de / (2.0 * PI)).sqrt();
    let mut diag = vec![spec.e0(), spec.e1()];
    diag.extend(grid.energies());
    let mut links = vec![(0, 1, spec.omega())];
    links.extend((0..n).map(|a| (1, 2 + a, g1)));
    if gb > 0.0 {
        diag.extend(grid.energies());
        links.extend((0..n).map(|a| (0, 2 + n + a, gb)));
    }
    let h = Hamiltonian { diag, links };
    let mut b = vec![Complex64::new(0.0, 0.0); h.diag.len()];
    b[0] = Complex64::new(1.0, 0.0);
    Ok(propagate(&h, b, t_samples, cfg, true, *grid))
}

/// Deviation statistics between two sampled channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_rel: f64,
    pub mean_rel: f64,
    /// Sample time of the largest absolute deviation.
    pub worst_t: f64,
}

/// Compares `a` against the reference `b`; relative deviations are taken
/// with respect to `|b|` and skip samples where it vanishes.
pub fn compare(a: &TimeSeries, b: &TimeSeries) -> Result<ErrorReport, OracleError> {
    if a.channel() != b.channel() {
        return Err(OracleError::ChannelMismatch(format!(
            "{} vs {}",
            a.channel(),
            b.channel()
        )));
    }
    if a.times() != b.times() {
        return Err(OracleError::ChannelMismatch("sample times differ".into()));
    }
    let mut rep = ErrorReport {
        max_abs: 0.0,
        mean_abs: 0.0,
        max_rel: 0.0,
        mean_rel: 0.0,
        worst_t: a.times().first().copied().unwrap_or(0.0),
    };
    let mut n_rel = 0usize;
    for ((t, x), y) in a.iter().zip(b.values()) {
        let d = (x - y).abs();
        rep.mean_abs += d;
        if d > rep.max_abs {
            rep.max_abs = d;
            rep.worst_t = t;
        }
        if *y != 0.0 {
            let r = d / y.abs();
            rep.max_rel = rep.max_rel.max(r);
            rep.mean_rel += r;
            n_rel += 1;
        }
    }
    if !a.is_empty() {
        rep.mean_abs /= a.len() as f64;
    }
    if n_rel > 0 {
        rep.mean_rel /= n_rel as f64;
    }
    Ok(rep)
}

/// Restricts a series to samples with `lo ≤ t ≤ hi`.
pub fn window(series: &TimeSeries, lo: f64, hi: f64) -> TimeSeries {
    let (t, v): (Vec<f64>, Vec<f64>) = series.iter().filter(|(t, _)| (lo..=hi).contains(t)).unzip();
    TimeSeries::new(series.channel(), t, v).expect("subset of a valid series")
}
