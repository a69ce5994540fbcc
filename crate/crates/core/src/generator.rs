//! Real sparse generators `L` for the flattened density-matrix state, `dx/dt = L x`.
//!
//! Every complex coherence is stored as an adjacent `(Re, Im)` pair, so each
//! builder expands the complex rate equations into real coupling blocks of
//! the form `[[a, -ε], [ε, a]]`.
//!
//! Besides the density-matrix elements, every rung carries an `Escaped`
//! accumulator holding the probability that has left the discrete levels
//! into the continuum (wide-band flux `Γ₀σ₀₀`, or `Γ̄σ₀₀ + Γ₁σ₁₁` for the
//! Lorentzian reservoir). On a finite grid `Σ_α σ_αα` only approaches this
//! value as the window widens and `δE → 0`; the accumulator makes the total
//! probability an exact invariant of the generator.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid};

const PARALLEL_MIN_DIM: usize = 8192;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("unsupported variant: {0}")]
    Unsupported(String),
    #[error("expected {expected} per-mode couplings, got {got}")]
    CouplingCount { expected: usize, got: usize },
    #[error("per-mode coupling {index} is not finite")]
    NonFiniteCoupling { index: usize },
    #[error("rung {rung} is outside the ladder (n_max = {n_max})")]
    RungOutOfRange { rung: usize, n_max: usize },
    #[error("generator is not a detector ladder")]
    NotLadder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    UnmeasuredConstant,
    UnmeasuredLorentzian,
    MeasuredConstant,
    MeasuredLorentzian,
    LadderConstant,
    LadderLorentzian,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::UnmeasuredConstant => "unmeasured_constant",
            Variant::UnmeasuredLorentzian => "unmeasured_lorentzian",
            Variant::MeasuredConstant => "measured_constant",
            Variant::MeasuredLorentzian => "measured_lorentzian",
            Variant::LadderConstant => "ladder_constant",
            Variant::LadderLorentzian => "ladder_lorentzian",
        }
    }

    pub fn is_ladder(self) -> bool {
        matches!(self, Variant::LadderConstant | Variant::LadderLorentzian)
    }

    pub fn has_aux(self) -> bool {
        matches!(
            self,
            Variant::UnmeasuredLorentzian | Variant::MeasuredLorentzian | Variant::LadderLorentzian
        )
    }

    /// The detector-traced counterpart of a ladder variant.
    pub fn traced(self) -> Variant {
        match self {
            Variant::LadderConstant => Variant::MeasuredConstant,
            Variant::LadderLorentzian => Variant::MeasuredLorentzian,
            other => other,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One retained component of the density matrix. Mode-resolved components
/// carry the reservoir mode index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Sigma00,
    Sigma11,
    ReSigma01,
    ImSigma01,
    Escaped,
    SigmaAA(usize),
    ReSigma0A(usize),
    ImSigma0A(usize),
    ReSigma1A(usize),
    ImSigma1A(usize),
}

impl Component {
    pub fn mode(self) -> Option<usize> {
        match self {
            Component::SigmaAA(a)
            | Component::ReSigma0A(a)
            | Component::ImSigma0A(a)
            | Component::ReSigma1A(a)
            | Component::ImSigma1A(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub component: Component,
    pub rung: usize,
}

/// Bijective map between `(component, rung)` and vector indices.
///
/// Rungs are contiguous blocks. Inside a rung the mode-independent head comes
/// first (`σ₀₀, Escaped` or `σ₀₀, σ₁₁, Re σ₀₁, Im σ₀₁, Escaped`), followed by
/// one record per mode (`σ_αα, Re σ₀α, Im σ₀α[, Re σ₁α, Im σ₁α]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    aux: bool,
    n_modes: usize,
    n_rungs: usize,
}

impl StateLayout {
    pub fn new(aux: bool, n_modes: usize, n_rungs: usize) -> Self {
        assert!(n_rungs >= 1, "a layout needs at least one rung");
        Self { aux, n_modes, n_rungs }
    }

    pub fn has_aux(&self) -> bool {
        self.aux
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_rungs(&self) -> usize {
        self.n_rungs
    }

    fn head_len(&self) -> usize {
        if self.aux {
            5
        } else {
            2
        }
    }

    fn mode_len(&self) -> usize {
        if self.aux {
            5
        } else {
            3
        }
    }

    pub fn rung_len(&self) -> usize {
        self.head_len() + self.n_modes * self.mode_len()
    }

    pub fn dim(&self) -> usize {
        self.n_rungs * self.rung_len()
    }

    /// Same layout with a single rung.
    pub fn traced(&self) -> StateLayout {
        StateLayout::new(self.aux, self.n_modes, 1)
    }

    pub fn index(&self, component: Component, rung: usize) -> Option<usize> {
        if rung >= self.n_rungs {
            return None;
        }
        let base = rung * self.rung_len();
        let head = self.head_len();
        let offset = match (component, self.aux) {
            (Component::Sigma00, _) => 0,
            (Component::Escaped, false) => 1,
            (Component::Sigma11, true) => 1,
            (Component::ReSigma01, true) => 2,
            (Component::ImSigma01, true) => 3,
            (Component::Escaped, true) => 4,
            (c, aux) => {
                let a = c.mode()?;
                if a >= self.n_modes {
                    return None;
                }
                let within = match c {
                    Component::SigmaAA(_) => 0,
                    Component::ReSigma0A(_) => 1,
                    Component::ImSigma0A(_) => 2,
                    Component::ReSigma1A(_) if aux => 3,
                    Component::ImSigma1A(_) if aux => 4,
                    _ => return None,
                };
                head + a * self.mode_len() + within
            }
        };
        Some(base + offset)
    }

    pub fn slot(&self, index: usize) -> Option<Slot> {
        if index >= self.dim() {
            return None;
        }
        let rung = index / self.rung_len();
        let rem = index % self.rung_len();
        let head = self.head_len();
        let component = if rem < head {
            match (rem, self.aux) {
                (0, _) => Component::Sigma00,
                (1, false) => Component::Escaped,
                (1, true) => Component::Sigma11,
                (2, true) => Component::ReSigma01,
                (3, true) => Component::ImSigma01,
                (4, true) => Component::Escaped,
                _ => unreachable!(),
            }
        } else {
            let a = (rem - head) / self.mode_len();
            match (rem - head) % self.mode_len() {
                0 => Component::SigmaAA(a),
                1 => Component::ReSigma0A(a),
                2 => Component::ImSigma0A(a),
                3 => Component::ReSigma1A(a),
                4 => Component::ImSigma1A(a),
                _ => unreachable!(),
            }
        };
        Some(Slot { component, rung })
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        (0..self.dim()).map(move |i| self.slot(i).expect("index within dimension"))
    }

    fn at(&self, component: Component, rung: usize) -> usize {
        self.index(component, rung)
            .unwrap_or_else(|| panic!("{component:?} at rung {rung} is not part of this layout"))
    }

    /// Indices of `component` across all rungs.
    pub fn rung_indices(&self, component: Component) -> Vec<usize> {
        (0..self.n_rungs).filter_map(|n| self.index(component, n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Real sparse generator together with its state layout and metadata.
#[derive(Debug, Clone)]
pub struct Generator {
    variant: Variant,
    layout: StateLayout,
    grid: ReservoirGrid,
    entries: Vec<Entry>,
    row_ptr: Vec<usize>,
    params: Vec<(&'static str, f64)>,
    warnings: Vec<String>,
}

impl Generator {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn grid(&self) -> &ReservoirGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Highest detector rung (0 for traced variants).
    pub fn n_max(&self) -> usize {
        self.layout.n_rungs() - 1
    }

    /// Non-zero entries in row-major order.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn params(&self) -> &[(&'static str, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn row(&self, row: usize) -> &[Entry] {
        &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = self.row(row);
        match r.binary_search_by(|e| e.col.cmp(&col)) {
            Ok(k) => r[k].value,
            Err(_) => 0.0,
        }
    }

    /// Convenience accessor by slot.
    pub fn coefficient(&self, row: (Component, usize), col: (Component, usize)) -> f64 {
        match (self.layout.index(row.0, row.1), self.layout.index(col.0, col.1)) {
            (Some(r), Some(c)) => self.get(r, c),
            _ => 0.0,
        }
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        let row_dot = |row: usize| {
            let mut acc = 0.0;
            for e in &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]] {
                acc += e.value * x[e.col];
            }
            acc
        };
        // Rows are independent, so the parallel path is bit-identical.
        if self.dim() >= PARALLEL_MIN_DIM {
            y.par_iter_mut().enumerate().for_each(|(row, out)| *out = row_dot(row));
        } else {
            for (row, out) in y.iter_mut().enumerate() {
                *out = row_dot(row);
            }
        }
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut cols = vec![0.0; self.dim()];
        for e in &self.entries {
            cols[e.col] += e.value.abs();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Electron on the dot level, detector at rung 0, everything else empty.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[self.layout.at(Component::Sigma00, 0)] = 1.0;
        x
    }

    /// Total probability `Σ_n (σ₀₀ + σ₁₁ + Escaped)`; exactly conserved.
    pub fn probability(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for n in 0..self.layout.n_rungs() {
            total += x[self.layout.at(Component::Sigma00, n)];
            total += x[self.layout.at(Component::Escaped, n)];
            if self.layout.has_aux() {
                total += x[self.layout.at(Component::Sigma11, n)];
            }
        }
        total
    }

    /// `Σ_n (σ₀₀ + Σ_α σ_αα)`: probability accounted for by the discrete grid.
    pub fn grid_probability(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for n in 0..self.layout.n_rungs() {
            total += x[self.layout.at(Component::Sigma00, n)];
            for a in 0..self.layout.n_modes() {
                total += x[self.layout.at(Component::SigmaAA(a), n)];
            }
        }
        total
    }

    /// Short digest of the parameter snapshot.
    pub fn params_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.variant.name().as_bytes());
        for (k, v) in &self.params {
            hasher.update(k.as_bytes());
            hasher.update(v.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Writes `# variant,dimension,params-hash` followed by `row,col,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {},{},{}", self.variant.name(), self.dim(), self.params_hash())?;
        writeln!(out, "row,col,value")?;
        for e in &self.entries {
            writeln!(out, "{},{},{:.16e}", e.row, e.col, e.value)?;
        }
        Ok(())
    }

    /// Sums the column block of `rung` over all row rungs, mapping every
    /// ladder slot to its traced counterpart. For an exact ladder this equals
    /// the traced generator for every `rung`.
    pub fn rung_column_trace(&self, rung: usize) -> Result<Vec<Entry>, GeneratorError> {
        if !self.variant.is_ladder() {
            return Err(GeneratorError::NotLadder);
        }
        if rung >= self.layout.n_rungs() {
            return Err(GeneratorError::RungOutOfRange {
                rung,
                n_max: self.n_max(),
            });
        }
        let len = self.layout.rung_len();
        let lo = rung * len;
        let hi = lo + len;
        let triplets = self
            .entries
            .iter()
            .filter(|e| (lo..hi).contains(&e.col))
            .map(|e| (e.row % len, e.col - lo, e.value))
            .collect();
        Ok(merge_triplets(triplets))
    }
}

fn merge_triplets(mut triplets: Vec<(usize, usize, f64)>) -> Vec<Entry> {
    // Stable sort keeps summation order deterministic for duplicates.
    triplets.sort_by_key(|t| (t.0, t.1));
    let mut out: Vec<Entry> = Vec::with_capacity(triplets.len());
    for (row, col, value) in triplets {
        match out.last_mut() {
            Some(last) if last.row == row && last.col == col => last.value += value,
            _ => out.push(Entry { row, col, value }),
        }
    }
    out.retain(|e| e.value != 0.0);
    out
}

/// Loss out of a rung (`own`) and inflow from the rung below (`gain`) for one
/// class of slots. Traced generators use `gain = 0`.
#[derive(Debug, Clone, Copy, Default)]
struct Rates {
    own: f64,
    gain: f64,
}

impl Rates {
    fn loss(own: f64) -> Self {
        Self { own, gain: 0.0 }
    }

    fn ladder(own: f64, gain: f64) -> Self {
        Self { own, gain }
    }

    /// Net loss once the rungs are summed. Evaluated exactly as the column
    /// sum of a ladder rung, so tracing a ladder reproduces it bit for bit.
    fn traced(self) -> Self {
        Self::loss(self.own - self.gain)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RateTable {
    dot: Rates,
    aux: Rates,
    escaped: Rates,
    dot_aux: Rates,
    mode: Rates,
    dot_mode: Rates,
    aux_mode: Rates,
}

impl RateTable {
    fn traced(self) -> Self {
        Self {
            dot: self.dot.traced(),
            aux: self.aux.traced(),
            escaped: self.escaped.traced(),
            dot_aux: self.dot_aux.traced(),
            mode: self.mode.traced(),
            dot_mode: self.dot_mode.traced(),
            aux_mode: self.aux_mode.traced(),
        }
    }

    fn constant_ladder(g0: f64, det: &DetectorSpec) -> Self {
        let (d, dp) = (det.d(), det.d_prime());
        let coherent = (d * dp).sqrt();
        Self {
            dot: Rates::ladder(g0 + dp, dp),
            escaped: Rates::ladder(d, d),
            mode: Rates::ladder(d, d),
            dot_mode: Rates::ladder(0.5 * (g0 + d + dp), coherent),
            ..Self::default()
        }
    }

    fn lorentzian_ladder(g1: f64, det: &DetectorSpec) -> Self {
        let (d, dp) = (det.d(), det.d_prime());
        let coherent = (d * dp).sqrt();
        Self {
            dot: Rates::ladder(dp, dp),
            aux: Rates::ladder(d + g1, d),
            escaped: Rates::ladder(d, d),
            dot_aux: Rates::ladder(0.5 * (d + dp + g1), coherent),
            mode: Rates::ladder(d, d),
            dot_mode: Rates::ladder(0.5 * (d + dp), coherent),
            aux_mode: Rates::ladder(0.5 * (2.0 * d + g1), d),
        }
    }
}

/// Coherent couplings shared by all rungs.
struct Couplings<'a> {
    e0: f64,
    /// Per-mode coupling of the dot level to the grid modes.
    mode: &'a [f64],
    /// `(E1, Ω)` for the auxiliary level.
    aux: Option<(f64, f64)>,
    /// Escape flux into the accumulator: `(from σ₀₀, from σ₁₁)`.
    escape: (f64, f64),
}

struct Assembler {
    layout: StateLayout,
    triplets: Vec<(usize, usize, f64)>,
}

impl Assembler {
    fn new(layout: StateLayout) -> Self {
        Self {
            layout,
            triplets: Vec::new(),
        }
    }

    fn add(&mut self, row: Component, col: Component, rung: usize, value: f64) {
        self.add_across(row, rung, col, rung, value);
    }

    fn add_across(&mut self, row: Component, row_rung: usize, col: Component, col_rung: usize, value: f64) {
        if value != 0.0 {
            let r = self.layout.at(row, row_rung);
            let c = self.layout.at(col, col_rung);
            self.triplets.push((r, c, value));
        }
    }

    /// `ż = (−a + iε) z` for the complex pair `z = (re, im)`.
    fn rotate(&mut self, re: Component, im: Component, rung: usize, damping: f64, detuning: f64) {
        self.add(re, re, rung, -damping);
        self.add(re, im, rung, -detuning);
        self.add(im, re, rung, detuning);
        self.add(im, im, rung, -damping);
    }

    /// Loss, self-feeding at the top rung and inflow from the rung below.
    fn rung_rates(&mut self, slots: &[Component], rung: usize, rates: Rates) {
        let top = rung + 1 == self.layout.n_rungs();
        let own = if top && rates.gain != 0.0 {
            // The top rung aggregates every n >= n_max: its outflow to the
            // next rung returns to itself.
            rates.own - rates.gain
        } else {
            rates.own
        };
        for &c in slots {
            self.add(c, c, rung, -own);
            if rung > 0 {
                self.add_across(c, rung, c, rung - 1, rates.gain);
            }
        }
    }

    fn rung(&mut self, rung: usize, cp: &Couplings<'_>, grid: &ReservoirGrid, rates: &RateTable) {
        use Component::*;

        self.rung_rates(&[Sigma00], rung, rates.dot);
        self.rung_rates(&[Escaped], rung, rates.escaped);
        self.add(Escaped, Sigma00, rung, cp.escape.0);

        if let Some((e1, omega)) = cp.aux {
            let eps10 = e1 - cp.e0;
            self.rung_rates(&[Sigma11], rung, rates.aux);
            self.add(Escaped, Sigma11, rung, cp.escape.1);
            // σ̇₀₀ ∋ iΩ(σ₀₁ − σ₁₀) = −2Ω Im σ₀₁, and the opposite for σ₁₁.
            self.add(Sigma00, ImSigma01, rung, -2.0 * omega);
            self.add(Sigma11, ImSigma01, rung, 2.0 * omega);
            // σ̇₀₁ = iε₁₀σ₀₁ + iΩ(σ₀₀ − σ₁₁) − γσ₀₁
            self.rotate(ReSigma01, ImSigma01, rung, 0.0, eps10);
            self.rung_rates(&[ReSigma01, ImSigma01], rung, rates.dot_aux);
            self.add(ImSigma01, Sigma00, rung, omega);
            self.add(ImSigma01, Sigma11, rung, -omega);
        }

        for (a, e_alpha) in grid.energies().enumerate() {
            let g = cp.mode[a];
            let kappa0 = e_alpha - cp.e0;
            // σ̇_αα = iΩ_α(σ_α0 − σ_0α) = 2Ω_α Im σ_0α
            self.rung_rates(&[SigmaAA(a)], rung, rates.mode);
            self.add(SigmaAA(a), ImSigma0A(a), rung, 2.0 * g);
            // σ̇_0α = iε_α0 σ_0α + iΩ_α σ₀₀ [− iΩ σ_1α] − γ σ_0α
            self.rotate(ReSigma0A(a), ImSigma0A(a), rung, 0.0, kappa0);
            self.rung_rates(&[ReSigma0A(a), ImSigma0A(a)], rung, rates.dot_mode);
            self.add(ImSigma0A(a), Sigma00, rung, g);
            if let Some((e1, omega)) = cp.aux {
                let kappa1 = e_alpha - e1;
                self.add(ReSigma0A(a), ImSigma1A(a), rung, omega);
                self.add(ImSigma0A(a), ReSigma1A(a), rung, -omega);
                // σ̇_1α = iε_α1 σ_1α + iΩ_α σ₁₀ − iΩ σ_0α − γ σ_1α
                self.rotate(ReSigma1A(a), ImSigma1A(a), rung, 0.0, kappa1);
                self.rung_rates(&[ReSigma1A(a), ImSigma1A(a)], rung, rates.aux_mode);
                self.add(ReSigma1A(a), ImSigma01, rung, g);
                self.add(ImSigma1A(a), ReSigma01, rung, g);
                self.add(ReSigma1A(a), ImSigma0A(a), rung, omega);
                self.add(ImSigma1A(a), ReSigma0A(a), rung, -omega);
            }
        }
    }

    fn finish(
        self,
        variant: Variant,
        grid: ReservoirGrid,
        params: Vec<(&'static str, f64)>,
        warnings: Vec<String>,
    ) -> Generator {
        let entries = merge_triplets(self.triplets);
        let dim = self.layout.dim();
        let mut row_ptr = vec![0usize; dim + 1];
        for e in &entries {
            row_ptr[e.row + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        debug_assert!(entries.iter().all(|e| e.value.is_finite()));
        Generator {
            variant,
            layout: self.layout,
            grid,
            entries,
            row_ptr,
            params,
            warnings,
        }
    }
}

/// Per-mode couplings for the constant-width reservoir.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeCouplings {
    /// `Ω_α² = Γ₀ δE / 2π`, which reproduces `Γ₀` in the continuum limit.
    WideBand,
    PerMode(Vec<f64>),
}

/// `Ω_α = √(Γ₀ δE / 2π)` on every mode.
pub fn wide_band_couplings(spec: &ConstantWidthSpec, grid: &ReservoirGrid) -> Vec<f64> {
    let g = (spec.gamma0() * grid.spacing() / (2.0 * PI)).sqrt();
    vec![g; grid.n_modes()]
}

/// `Ω_α = Ω √(ρ(E_α) δE)`: each grid cell stands for `ρ(E_α)δE` reservoir
/// modes of coupling `Ω`, so `σ_αα` is the probability in that cell.
pub fn lorentzian_couplings(spec: &LorentzianDosSpec, grid: &ReservoirGrid) -> Vec<f64> {
    let de = grid.spacing();
    grid.energies()
        .map(|e| spec.omega() * (spec.dos(e) * de).sqrt())
        .collect()
}

fn resolve_couplings(
    spec: &ConstantWidthSpec,
    grid: &ReservoirGrid,
    couplings: &ModeCouplings,
) -> Result<Vec<f64>, GeneratorError> {
    match couplings {
        ModeCouplings::WideBand => Ok(wide_band_couplings(spec, grid)),
        ModeCouplings::PerMode(v) => {
            if v.len() != grid.n_modes() {
                return Err(GeneratorError::CouplingCount {
                    expected: grid.n_modes(),
                    got: v.len(),
                });
            }
            if let Some(index) = v.iter().position(|g| !g.is_finite()) {
                return Err(GeneratorError::NonFiniteCoupling { index });
            }
            Ok(v.clone())
        }
    }
}

fn coarse_grid_warning(grid: &ReservoirGrid, width: f64, name: &str) -> Vec<String> {
    if width > 0.0 && grid.spacing() > width / 4.0 {
        vec![format!(
            "grid spacing {} exceeds {name}/4 = {}; the continuum is poorly resolved",
            grid.spacing(),
            width / 4.0
        )]
    } else {
        Vec::new()
    }
}

fn grid_params(grid: &ReservoirGrid) -> [(&'static str, f64); 3] {
    [
        ("e_min", grid.e_min()),
        ("e_max", grid.e_max()),
        ("n_modes", grid.n_modes() as f64),
    ]
}

fn constant_params(spec: &ConstantWidthSpec, det: &DetectorSpec, grid: &ReservoirGrid) -> Vec<(&'static str, f64)> {
    let mut p = vec![
        ("E0", spec.e0()),
        ("Gamma0", spec.gamma0()),
        ("D", det.d()),
        ("Dprime", det.d_prime()),
        ("GammaD", det.gamma_d()),
    ];
    p.extend(grid_params(grid));
    p
}

fn lorentzian_params(spec: &LorentzianDosSpec, det: &DetectorSpec, grid: &ReservoirGrid) -> Vec<(&'static str, f64)> {
    let mut p = vec![
        ("E0", spec.e0()),
        ("E1", spec.e1()),
        ("Omega", spec.omega()),
        ("Gamma1", spec.gamma1()),
        ("GammaBar", spec.gamma_bar()),
        ("rhoBar", spec.rho_bar()),
        ("D", det.d()),
        ("Dprime", det.d_prime()),
        ("GammaD", det.gamma_d()),
    ];
    p.extend(grid_params(grid));
    p
}

fn build_constant_family(
    variant: Variant,
    spec: &ConstantWidthSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
    couplings: Vec<f64>,
    n_rungs: usize,
    rates: RateTable,
) -> Generator {
    let layout = StateLayout::new(false, grid.n_modes(), n_rungs);
    let cp = Couplings {
        e0: spec.e0(),
        mode: &couplings,
        aux: None,
        escape: (spec.gamma0(), 0.0),
    };
    let mut asm = Assembler::new(layout);
    for n in 0..n_rungs {
        asm.rung(n, &cp, grid, &rates);
    }
    let mut params = constant_params(spec, det, grid);
    if variant.is_ladder() {
        params.push(("n_max", (n_rungs - 1) as f64));
    }
    let warnings = coarse_grid_warning(grid, spec.gamma0(), "Gamma0");
    asm.finish(variant, *grid, params, warnings)
}

fn build_lorentzian_family(
    variant: Variant,
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
    n_rungs: usize,
    rates: RateTable,
) -> Generator {
    let layout = StateLayout::new(true, grid.n_modes(), n_rungs);
    let couplings = lorentzian_couplings(spec, grid);
    let cp = Couplings {
        e0: spec.e0(),
        mode: &couplings,
        aux: Some((spec.e1(), spec.omega())),
        escape: (spec.gamma_bar(), spec.gamma1()),
    };
    let mut asm = Assembler::new(layout);
    for n in 0..n_rungs {
        asm.rung(n, &cp, grid, &rates);
    }
    let mut params = lorentzian_params(spec, det, grid);
    if variant.is_ladder() {
        params.push(("n_max", (n_rungs - 1) as f64));
    }
    let warnings = coarse_grid_warning(grid, spec.gamma1(), "Gamma1");
    asm.finish(variant, *grid, params, warnings)
}

/// Unobserved decay into a flat reservoir:
/// `σ̇₀₀ = −Γ₀σ₀₀`, `σ̇_αα = iΩ_α(σ_α0 − σ_0α)`,
/// `σ̇_α0 = iε_0α σ_α0 − iΩ_α σ₀₀ − (Γ₀/2) σ_α0`.
pub fn build_unmeasured_constant(
    spec: &ConstantWidthSpec,
    couplings: &ModeCouplings,
    grid: &ReservoirGrid,
) -> Result<Generator, GeneratorError> {
    let g0 = spec.gamma0();
    let rates = RateTable {
        dot: Rates::loss(g0),
        dot_mode: Rates::loss(0.5 * g0),
        ..RateTable::default()
    };
    let couplings = resolve_couplings(spec, grid, couplings)?;
    Ok(build_constant_family(
        Variant::UnmeasuredConstant,
        spec,
        &DetectorSpec::off(),
        grid,
        couplings,
        1,
        rates,
    ))
}

/// Detector-traced decay into a flat reservoir; the dot–mode coherences are
/// damped by `(Γ₀ + Γ_d)/2`, nothing else changes.
pub fn build_measured_constant(
    spec: &ConstantWidthSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
) -> Result<Generator, GeneratorError> {
    let rates = RateTable::constant_ladder(spec.gamma0(), det).traced();
    Ok(build_constant_family(
        Variant::MeasuredConstant,
        spec,
        det,
        grid,
        wide_band_couplings(spec, grid),
        1,
        rates,
    ))
}

/// Detector-resolved equations for the flat reservoir, rungs `n = 0..=n_max`.
///
/// `σ̇₀₀⁽ⁿ⁾ = −(Γ₀+D')σ₀₀⁽ⁿ⁾ + D'σ₀₀⁽ⁿ⁻¹⁾`,
/// `σ̇_αα⁽ⁿ⁾ = −Dσ_αα⁽ⁿ⁾ + Dσ_αα⁽ⁿ⁻¹⁾ + iΩ_α(σ_α0⁽ⁿ⁾ − σ_0α⁽ⁿ⁾)`,
/// `σ̇_α0⁽ⁿ⁾ = iε_0α σ_α0⁽ⁿ⁾ − iΩ_α σ₀₀⁽ⁿ⁾ − ½(Γ₀+D+D')σ_α0⁽ⁿ⁾ + √(DD') σ_α0⁽ⁿ⁻¹⁾`.
///
/// Rung `n_max` stands for all `n ≥ n_max`, so summing over rungs reproduces
/// [`build_measured_constant`] exactly.
pub fn build_ladder_constant(
    spec: &ConstantWidthSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
    n_max: usize,
) -> Result<Generator, GeneratorError> {
    let rates = RateTable::constant_ladder(spec.gamma0(), det);
    Ok(build_constant_family(
        Variant::LadderConstant,
        spec,
        det,
        grid,
        wide_band_couplings(spec, grid),
        n_max + 1,
        rates,
    ))
}

/// Unobserved decay into the Lorentzian reservoir, with the resonance as an
/// auxiliary level `E1` of width `Γ₁`:
///
/// `σ̇₀₀ = −Γ̄σ₀₀ + iΩ(σ₀₁ − σ₁₀)`, `σ̇₁₁ = −Γ₁σ₁₁ + iΩ(σ₁₀ − σ₀₁)`,
/// `σ̇₀₁ = iε₁₀σ₀₁ + iΩ(σ₀₀ − σ₁₁) − ½(Γ̄+Γ₁)σ₀₁`,
/// `σ̇_αα = iΩ(σ_α0 − σ_0α)`,
/// `σ̇_0α = iε_α0σ_0α + iΩ(σ₀₀ − σ_1α) − ½Γ̄σ_0α`,
/// `σ̇_1α = iε_α1σ_1α + iΩ(σ₁₀ − σ_0α) − ½Γ₁σ_1α`.
pub fn build_unmeasured_lorentzian(
    spec: &LorentzianDosSpec,
    grid: &ReservoirGrid,
) -> Result<Generator, GeneratorError> {
    let (gb, g1) = (spec.gamma_bar(), spec.gamma1());
    let rates = RateTable {
        dot: Rates::loss(gb),
        aux: Rates::loss(g1),
        dot_aux: Rates::loss(0.5 * (gb + g1)),
        dot_mode: Rates::loss(0.5 * gb),
        aux_mode: Rates::loss(0.5 * g1),
        ..RateTable::default()
    };
    Ok(build_lorentzian_family(
        Variant::UnmeasuredLorentzian,
        spec,
        &DetectorSpec::off(),
        grid,
        1,
        rates,
    ))
}

fn require_no_background(spec: &LorentzianDosSpec) -> Result<(), GeneratorError> {
    if spec.gamma_bar() != 0.0 {
        return Err(GeneratorError::Unsupported(format!(
            "measured Lorentzian reservoir requires GammaBar = 0, got {}",
            spec.gamma_bar()
        )));
    }
    Ok(())
}

/// Detector-traced Lorentzian equations. The detector only damps coherences
/// involving the dot level: `σ₀₁` by `(Γ₁+Γ_d)/2`, `σ_0α` by `Γ_d/2`.
pub fn build_measured_lorentzian(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
) -> Result<Generator, GeneratorError> {
    require_no_background(spec)?;
    let rates = RateTable::lorentzian_ladder(spec.gamma1(), det).traced();
    Ok(build_lorentzian_family(
        Variant::MeasuredLorentzian,
        spec,
        det,
        grid,
        1,
        rates,
    ))
}

/// Detector-resolved Lorentzian equations. The point contact transfers at
/// `D'` while the electron sits on `E0` and at `D` otherwise:
///
/// `σ̇₀₀⁽ⁿ⁾ = −D'σ₀₀⁽ⁿ⁾ + D'σ₀₀⁽ⁿ⁻¹⁾ + iΩ(σ₀₁⁽ⁿ⁾ − σ₁₀⁽ⁿ⁾)`,
/// `σ̇₁₁⁽ⁿ⁾ = −(D+Γ₁)σ₁₁⁽ⁿ⁾ + Dσ₁₁⁽ⁿ⁻¹⁾ + iΩ(σ₁₀⁽ⁿ⁾ − σ₀₁⁽ⁿ⁾)`,
/// `σ₀₁`: damping `½(D+D'+Γ₁)`, gain `√(DD')`;
/// `σ_αα`: loss and gain `D`; `σ_0α`: damping `½(D+D')`, gain `√(DD')`;
/// `σ_1α`: damping `½(2D+Γ₁)`, gain `D`.
pub fn build_ladder_lorentzian(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    grid: &ReservoirGrid,
    n_max: usize,
) -> Result<Generator, GeneratorError> {
    require_no_background(spec)?;
    let rates = RateTable::lorentzian_ladder(spec.gamma1(), det);
    Ok(build_lorentzian_family(
        Variant::LadderLorentzian,
        spec,
        det,
        grid,
        n_max + 1,
        rates,
    ))
}

/// Smallest ladder depth whose top rung holds a negligible share of the
/// counting distribution up to `t_max`: `D t + 10√(D t) + 10`.
pub fn ladder_depth(det: &DetectorSpec, t_max: f64) -> usize {
    let mean = det.max_rate() * t_max;
    (mean + 10.0 * mean.sqrt() + 10.0).ceil() as usize
}
