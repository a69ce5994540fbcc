//! Time evolution of `dx/dt = L x`, survival probability, mean decay time and
//! the point-contact current.

use std::collections::BTreeSet;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::generator::{Component, Generator, StateLayout, Variant};
use crate::model::DetectorSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("state has dimension {got}, generator expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("sample times must be finite, non-negative and strictly increasing")]
    Samples,
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("non-decaying subspace")]
    NonDecaying,
    #[error("layout error: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Dormand-Prince 5(4) with per-component error control.
    Adaptive,
    /// Truncated-Taylor action of the matrix exponential.
    Expm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Expm => "expm",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        match name {
            "adaptive" => Some(Method::Adaptive),
            "expm" => Some(Method::Expm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: f64::INFINITY,
            method: Method::Expm,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            method: Method::Adaptive,
            ..Self::default()
        }
    }

    pub fn expm() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.rtol > 0.0 && self.rtol <= 1e-3) {
            return Err(DynamicsError::Config(format!(
                "rtol must be in (0, 1e-3], got {}",
                self.rtol
            )));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "atol must be positive, got {}",
                self.atol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(DynamicsError::Config(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        Ok(())
    }
}

/// Sampled scalar channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    channel: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(channel: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self, DynamicsError> {
        check_samples(&times)?;
        if times.len() != values.len() {
            return Err(DynamicsError::Layout(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t: times[k] });
        }
        Ok(Self {
            channel: channel.into(),
            times,
            values,
        })
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Trapezoid integral over the sampled range.
    pub fn trapezoid(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Least-squares polynomial `c₀ + c₁t + … + c_d t^d` through the samples
    /// with `t ≤ t_hi`. Returns `[c₀, …, c_d]`.
    pub fn polynomial_fit(&self, t_hi: f64, degree: usize) -> Result<Vec<f64>, DynamicsError> {
        let pts: Vec<(f64, f64)> = self.iter().filter(|&(t, _)| t <= t_hi).collect();
        if pts.len() <= degree || !(t_hi > 0.0) {
            return Err(DynamicsError::Samples);
        }
        // Fit in s = t/t_hi to keep the Vandermonde matrix well conditioned.
        let a = DMatrix::from_fn(pts.len(), degree + 1, |i, j| (pts[i].0 / t_hi).powi(j as i32));
        let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
        let c = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| DynamicsError::Config(e.to_string()))?;
        Ok(c.iter().enumerate().map(|(j, v)| v / t_hi.powi(j as i32)).collect())
    }

    /// Writes `# key=value` metadata, then `t,<channel>` and the samples.
    pub fn write_csv<W: Write>(&self, mut out: W, meta: &[(String, String)]) -> io::Result<()> {
        for (k, v) in meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "t,{}", self.channel)?;
        for (t, v) in self.iter() {
            writeln!(out, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Full state snapshots at the requested sample times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    variant: Variant,
    layout: StateLayout,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Scalar channel `Σ_{slots} x[slot]` over the given component on every rung.
    pub fn channel(&self, name: &str, component: Component) -> Result<TimeSeries, DynamicsError> {
        let idx = self.layout.rung_indices(component);
        if idx.is_empty() {
            return Err(DynamicsError::Layout(format!(
                "{component:?} is not part of the {} layout",
                self.variant
            )));
        }
        let values = self.states.iter().map(|x| idx.iter().map(|&i| x[i]).sum()).collect();
        TimeSeries::new(name, self.times.clone(), values)
    }

    fn map<F: Fn(&[f64]) -> f64>(&self, name: &str, f: F) -> Result<TimeSeries, DynamicsError> {
        let values = self.states.iter().map(|x| f(x)).collect();
        TimeSeries::new(name, self.times.clone(), values)
    }

    /// Rung populations `P_n = σ₀₀⁽ⁿ⁾ + σ₁₁⁽ⁿ⁾ + Escaped⁽ⁿ⁾` at sample `k`.
    pub fn rung_populations(&self, k: usize) -> Vec<f64> {
        let x = &self.states[k];
        (0..self.layout.n_rungs())
            .map(|n| {
                let mut p = x[self.layout.index(Component::Sigma00, n).unwrap()]
                    + x[self.layout.index(Component::Escaped, n).unwrap()];
                if let Some(i) = self.layout.index(Component::Sigma11, n) {
                    p += x[i];
                }
                p
            })
            .collect()
    }

    /// `σ_αα` summed over rungs at sample `k`, ordered by mode.
    pub fn mode_populations(&self, k: usize) -> Vec<f64> {
        let x = &self.states[k];
        (0..self.layout.n_modes())
            .map(|a| {
                self.layout
                    .rung_indices(Component::SigmaAA(a))
                    .into_iter()
                    .map(|i| x[i])
                    .sum()
            })
            .collect()
    }
}

fn check_samples(times: &[f64]) -> Result<(), DynamicsError> {
    let ok = times.iter().all(|t| t.is_finite())
        && times.first().is_none_or(|&t| t >= 0.0)
        && times.windows(2).all(|w| w[1] > w[0]);
    if ok {
        Ok(())
    } else {
        Err(DynamicsError::Samples)
    }
}

/// `n` equally spaced samples on `[0, t_max]`.
pub fn linear_samples(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t_max],
        _ => (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect(),
    }
}

/// `t = 0` followed by 400 log-spaced samples from 0.01 to `t_max`.
pub fn default_samples(t_max: f64) -> Vec<f64> {
    const N: usize = 400;
    let (lo, hi) = (0.01f64.ln(), t_max.ln());
    let mut out = vec![0.0];
    out.extend((0..N).map(|k| (lo + (hi - lo) * k as f64 / (N - 1) as f64).exp()));
    out
}

/// Ten mean lifetimes.
pub fn default_t_max(decay_time: f64) -> f64 {
    10.0 * decay_time
}

/// Integrates `dx/dt = L x` from `x0` at `t = 0` and records the state at
/// every sample time.
pub fn evolve(
    gen: &Generator,
    x0: &[f64],
    t_samples: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    if x0.len() != gen.dim() {
        return Err(DynamicsError::Dimension {
            expected: gen.dim(),
            got: x0.len(),
        });
    }
    check_samples(t_samples)?;
    cfg.validate()?;
    let states = match cfg.method {
        Method::Adaptive => Dopri5::new(gen, cfg).run(x0, t_samples)?,
        Method::Expm => expm_samples(gen, x0, t_samples, cfg)?,
    };
    Ok(Trajectory {
        variant: gen.variant(),
        layout: *gen.layout(),
        times: t_samples.to_vec(),
        states,
    })
}

/// `σ₀₀(t)`, summed over detector rungs.
pub fn survival_probability(traj: &Trajectory) -> Result<TimeSeries, DynamicsError> {
    traj.channel("sigma00", Component::Sigma00)
}

/// `Σ_n (σ₀₀ + σ₁₁ + Escaped)`, which the generators conserve exactly.
pub fn total_probability(traj: &Trajectory) -> Result<TimeSeries, DynamicsError> {
    let layout = *traj.layout();
    traj.map("trace", |x| {
        (0..layout.n_rungs())
            .map(|n| {
                let mut p =
                    x[layout.index(Component::Sigma00, n).unwrap()] + x[layout.index(Component::Escaped, n).unwrap()];
                if let Some(i) = layout.index(Component::Sigma11, n) {
                    p += x[i];
                }
                p
            })
            .sum()
    })
}

/// `Σ_n (σ₀₀ + Σ_α σ_αα)`: probability resolved on the reservoir grid. Tends
/// to one as the grid window grows and `δE → 0`.
pub fn grid_probability(traj: &Trajectory) -> Result<TimeSeries, DynamicsError> {
    let layout = *traj.layout();
    traj.map("grid_trace", |x| {
        (0..layout.n_rungs())
            .map(|n| {
                x[layout.index(Component::Sigma00, n).unwrap()]
                    + (0..layout.n_modes())
                        .map(|a| x[layout.index(Component::SigmaAA(a), n).unwrap()])
                        .sum::<f64>()
            })
            .sum()
    })
}

/// Probability held by the top rung, which stands for every `n ≥ n_max`.
pub fn top_rung_mass(traj: &Trajectory) -> Result<TimeSeries, DynamicsError> {
    if !traj.variant().is_ladder() {
        return Err(DynamicsError::Layout(format!("{} is not a ladder", traj.variant())));
    }
    let top = traj.layout().n_rungs() - 1;
    let values = (0..traj.times().len()).map(|k| traj.rung_populations(k)[top]).collect();
    TimeSeries::new("top_rung", traj.times().to_vec(), values)
}

/// Mean number of collector electrons and its rate.
#[derive(Debug, Clone)]
pub struct CurrentSignal {
    /// `d⟨n⟩/dt = D' P_occ + D (1 − P_occ)`.
    pub rate: TimeSeries,
    /// `⟨n⟩ = Σ_n n P_n`.
    pub mean_count: TimeSeries,
}

/// Point-contact current from a ladder trajectory.
///
/// The contact transfers at `D'` only while the electron sits on `E0`; the
/// auxiliary level of the Lorentzian reservoir is a reservoir state for the
/// detector, so `P_occ = σ₀₀` in both variants.
pub fn detector_current(traj: &Trajectory, det: &DetectorSpec) -> Result<CurrentSignal, DynamicsError> {
    if !traj.variant().is_ladder() {
        return Err(DynamicsError::Layout(format!(
            "detector current needs a ladder trajectory, got {}",
            traj.variant()
        )));
    }
    let occ = survival_probability(traj)?;
    let rate = occ
        .values()
        .iter()
        .map(|p| det.d_prime() * p + det.d() * (1.0 - p))
        .collect();
    let counts = (0..traj.times().len())
        .map(|k| {
            traj.rung_populations(k)
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum()
        })
        .collect();
    Ok(CurrentSignal {
        rate: TimeSeries::new("current", traj.times().to_vec(), rate)?,
        mean_count: TimeSeries::new("mean_count", traj.times().to_vec(), counts)?,
    })
}

/// `T = ∫₀^∞ σ₀₀ dt` from a linear solve.
///
/// The solve is restricted to the slots `σ₀₀` depends on (its backward
/// reachability closure); that block evolves autonomously, and excluding the
/// accumulating slots (`σ_αα`, `Escaped`) removes the null space of `L`.
pub fn decay_time(gen: &Generator, x0: &[f64]) -> Result<f64, DynamicsError> {
    if x0.len() != gen.dim() {
        return Err(DynamicsError::Dimension {
            expected: gen.dim(),
            got: x0.len(),
        });
    }
    let targets = gen.layout().rung_indices(Component::Sigma00);
    let mut closure: BTreeSet<usize> = targets.iter().copied().collect();
    let mut stack = targets.clone();
    while let Some(i) = stack.pop() {
        for e in gen.row(i) {
            if closure.insert(e.col) {
                stack.push(e.col);
            }
        }
    }
    let slots: Vec<usize> = closure.into_iter().collect();
    let pos = |i: usize| slots.binary_search(&i).expect("slot in closure");
    let n = slots.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (r, &i) in slots.iter().enumerate() {
        for e in gen.row(i) {
            a[(r, pos(e.col))] = e.value;
        }
    }
    let rhs = DVector::from_iterator(n, slots.iter().map(|&i| -x0[i]));
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lu = a.lu();
    let y = lu.solve(&rhs).ok_or(DynamicsError::NonDecaying)?;
    // LU "succeeds" on numerically singular blocks; reject those explicitly.
    let pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if scale == 0.0 || pivot <= 1e-13 * scale || y.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonDecaying);
    }
    Ok(targets.iter().map(|&i| y[pos(i)]).sum())
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Taylor degrees and the largest `‖tA‖₁` for which each reaches double
/// precision backward error.
const THETA: [f64; 30] = [
    2.29e-16, 2.58e-8, 1.39e-5, 3.40e-4, 2.40e-3, 9.07e-3, 2.38e-2, 5.00e-2, 8.96e-2, 1.44e-1, 2.14e-1, 3.00e-1,
    4.00e-1, 5.14e-1, 6.41e-1, 7.81e-1, 9.31e-1, 1.09, 1.26, 1.44, 1.62, 1.82, 2.01, 2.22, 2.43, 2.64, 2.86, 3.08,
    3.31, 3.54,
];

/// Cheapest `(m, s)` with `‖tA‖/s ≤ θ_m`.
fn taylor_parameters(norm: f64) -> (usize, usize) {
    if norm == 0.0 {
        return (0, 1);
    }
    let mut best = (0, 0, usize::MAX);
    for (k, &theta) in THETA.iter().enumerate() {
        let m = k + 1;
        let s = (norm / theta).ceil().max(1.0) as usize;
        let cost = m.saturating_mul(s);
        if cost < best.2 {
            best = (m, s, cost);
        }
    }
    (best.0, best.1)
}

fn expm_samples(
    gen: &Generator,
    x0: &[f64],
    t_samples: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    let n = gen.dim();
    let mu = if n > 0 { gen.trace() / n as f64 } else { 0.0 };
    // The truncation bound holds in any operator norm, so take the smaller of
    // ‖A − μI‖₁ and ‖A − μI‖∞. Grid generators have one dense column (σ00
    // feeds every mode) that makes the 1-norm much larger than the row norm.
    let mut cols = vec![0.0; n];
    let mut rows = vec![0.0; n];
    let mut has_diag = vec![false; n];
    for e in gen.entries() {
        let v = if e.row == e.col {
            has_diag[e.row] = true;
            e.value - mu
        } else {
            e.value
        };
        cols[e.col] += v.abs();
        rows[e.row] += v.abs();
    }
    for i in 0..n {
        if !has_diag[i] {
            cols[i] += mu.abs();
            rows[i] += mu.abs();
        }
    }
    let norm1 = cols.into_iter().fold(0.0, f64::max);
    let norm_inf = rows.into_iter().fold(0.0, f64::max);
    let norm = norm1.min(norm_inf);

    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_samples.len());
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for &ts in t_samples {
        let pieces = ((ts - t) / cfg.max_step).ceil().max(1.0) as usize;
        if ts > t {
            let h = (ts - t) / pieces as f64;
            for _ in 0..pieces {
                expm_step(gen, mu, norm, h, &mut x, &mut term, &mut next);
            }
        }
        t = ts;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// `x ← exp(h L) x` by `s` steps of the degree-`m` Taylor polynomial of the
/// shifted operator.
fn expm_step(gen: &Generator, mu: f64, norm: f64, h: f64, x: &mut [f64], term: &mut [f64], next: &mut [f64]) {
    const TOL: f64 = f64::EPSILON / 2.0;
    let (m, s) = taylor_parameters(norm * h);
    let eta = (mu * h / s as f64).exp();
    for _ in 0..s {
        term.copy_from_slice(x);
        let mut c1 = max_abs(term);
        for k in 1..=m {
            gen.apply(term, next);
            let scale = h / (s as f64 * k as f64);
            for (tv, nv) in term.iter_mut().zip(next.iter()) {
                *tv = scale * (nv - mu * *tv);
            }
            let c2 = max_abs(term);
            for (xv, tv) in x.iter_mut().zip(term.iter()) {
                *xv += tv;
            }
            if c1 + c2 <= TOL * max_abs(x) {
                break;
            }
            c1 = c2;
        }
        for xv in x.iter_mut() {
            *xv *= eta;
        }
    }
}

struct Dopri5<'a> {
    gen: &'a Generator,
    cfg: &'a IntegratorConfig,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl<'a> Dopri5<'a> {
    fn new(gen: &'a Generator, cfg: &'a IntegratorConfig) -> Self {
        Self { gen, cfg }
    }

    fn error_norm(&self, x: &[f64], xn: &[f64], err: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let sc = self.cfg.atol.max(self.cfg.rtol * x[i].abs().max(xn[i].abs()));
            worst = worst.max(err[i].abs() / sc);
        }
        worst
    }

    fn initial_step(&self, x: &[f64], f: &[f64], span: f64) -> f64 {
        let scale = |v: &[f64]| {
            v.iter()
                .zip(x)
                .map(|(a, b)| a.abs() / self.cfg.atol.max(self.cfg.rtol * b.abs()))
                .fold(0.0f64, f64::max)
        };
        let d0 = scale(x);
        let d1 = scale(f);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span).min(self.cfg.max_step)
    }

    fn run(&self, x0: &[f64], t_samples: &[f64]) -> Result<Vec<Vec<f64>>, DynamicsError> {
        let n = x0.len();
        let gen = self.gen;
        let mut x = x0.to_vec();
        let mut t = 0.0f64;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut xn = vec![0.0; n];
        let mut err = vec![0.0; n];
        gen.apply(&x, &mut k1);
        let span = t_samples.last().copied().unwrap_or(0.0);
        let mut h = self.initial_step(&x, &k1, span.max(1e-12));
        let mut out = Vec::with_capacity(t_samples.len());

        for &ts in t_samples {
            while t < ts {
                let remaining = ts - t;
                let last = h >= remaining;
                let hs = if last { remaining } else { h.min(self.cfg.max_step) };
                if hs < 1e-14 * t.abs().max(1.0) && !last {
                    return Err(DynamicsError::StepUnderflow { t, h: hs });
                }
                for i in 0..n {
                    y[i] = x[i] + hs * A21 * k1[i];
                }
                gen.apply(&y, &mut k2);
                for i in 0..n {
                    y[i] = x[i] + hs * (A31 * k1[i] + A32 * k2[i]);
                }
                gen.apply(&y, &mut k3);
                for i in 0..n {
                    y[i] = x[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
                }
                gen.apply(&y, &mut k4);
                for i in 0..n {
                    y[i] = x[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
                }
                gen.apply(&y, &mut k5);
                for i in 0..n {
                    y[i] = x[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
                }
                gen.apply(&y, &mut k6);
                for i in 0..n {
                    xn[i] = x[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
                }
                gen.apply(&xn, &mut k7);
                for i in 0..n {
                    err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                }
                let e = self.error_norm(&x, &xn, &err);
                if !e.is_finite() {
                    return Err(DynamicsError::NonFinite { t: t + hs });
                }
                let factor = if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
                };
                if e <= 1.0 {
                    t = if last { ts } else { t + hs };
                    std::mem::swap(&mut x, &mut xn);
                    std::mem::swap(&mut k1, &mut k7);
                    // A step shortened to land on a sample says nothing about
                    // the natural step size.
                    if !last || factor < 1.0 {
                        h = hs * factor;
                    }
                } else {
                    h = hs * factor.min(1.0);
                    if h < 1e-14 * t.abs().max(1.0) {
                        return Err(DynamicsError::StepUnderflow { t, h });
                    }
                }
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_measured_constant, build_unmeasured_lorentzian};
    use crate::model::{ConstantWidthSpec, LorentzianDosSpec, ReservoirGrid};

    #[test]
    fn taylor_parameters_cover_norm() {
        assert_eq!(taylor_parameters(0.0), (0, 1));
        for norm in [1e-3, 0.7, 3.0, 40.0, 1234.5] {
            let (m, s) = taylor_parameters(norm);
            assert!(norm / s as f64 <= THETA[m - 1]);
        }
    }

    #[test]
    fn samples_are_validated() {
        assert!(check_samples(&[0.0, 1.0, 2.0]).is_ok());
        assert!(check_samples(&[0.0, 1.0, 1.0]).is_err());
        assert!(check_samples(&[-1.0, 1.0]).is_err());
        assert!(check_samples(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn default_sampling() {
        let s = default_samples(30.0);
        assert_eq!(s.len(), 401);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.01).abs() < 1e-15);
        assert!((s[400] - 30.0).abs() < 1e-12);
        assert_eq!(linear_samples(2.0, 3), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn config_bounds() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig::adaptive(1e-2, 1e-12).validate().is_err());
        assert!(IntegratorConfig::adaptive(1e-9, 0.0).validate().is_err());
    }

    #[test]
    fn decay_time_of_pure_exponential() {
        let spec = ConstantWidthSpec::new(0.0, 2.0).unwrap();
        let grid = ReservoirGrid::new(-10.0, 10.0, 40).unwrap();
        let gen = build_measured_constant(&spec, &DetectorSpec::off(), &grid).unwrap();
        let t = decay_time(&gen, &gen.initial_state()).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frozen_dot_has_no_decay_time() {
        let spec = LorentzianDosSpec::new(0.0, 0.0, 1e-300, 1.0, 0.0).unwrap();
        let grid = ReservoirGrid::new(-1.0, 1.0, 4).unwrap();
        let gen = build_unmeasured_lorentzian(&spec, &grid).unwrap();
        assert_eq!(decay_time(&gen, &gen.initial_state()), Err(DynamicsError::NonDecaying));
    }

    #[test]
    fn series_csv() {
        let s = TimeSeries::new("sigma00", vec![0.0, 0.5], vec![1.0, 0.25]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[("variant".into(), "x".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# variant=x\nt,sigma00\n0.0000000000000000e0,1.0000000000000000e0\n5.0000000000000000e-1,2.5000000000000000e-1\n"
        );
    }
}
