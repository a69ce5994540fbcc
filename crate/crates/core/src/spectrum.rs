//! Asymptotic energy distribution `P(E_α)` of the tunnelled electron.
//!
//! For the measured Lorentzian model the distribution follows from the time
//! integrals `σ̄ = ∫₀^∞ σ dt`: a real 4×4 system fixes the level block
//! (`σ̄₀₀`, `σ̄₁₁`, `σ̄₀₁`), after which each energy needs one complex 2×2
//! solve for `σ̄₀α`, `σ̄₁α`. Then `P(E_α) = 2Ω Im σ̄₀α ρ(E_α)`.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ConstantWidthSpec, DetectorSpec, LorentzianDosSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("measured spectra need GammaBar = 0, got {0}")]
    Background(f64),
    #[error("singular time-integrated system")]
    Singular,
    #[error("energies must be finite and strictly increasing")]
    Energies,
    #[error("window too narrow: dominant peak at E = {0} touches the boundary")]
    WindowTooNarrow(f64),
    #[error("empty spectrum")]
    Empty,
}

/// Time integrals of the level block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBarBlock {
    pub sbar00: f64,
    pub sbar11: f64,
    pub sbar01: Complex64,
}

fn require_no_background(spec: &LorentzianDosSpec) -> Result<(), SpectrumError> {
    if spec.gamma_bar() != 0.0 {
        Err(SpectrumError::Background(spec.gamma_bar()))
    } else {
        Ok(())
    }
}

/// Solves, for unknowns `(σ̄₀₀, σ̄₁₁, Re σ̄₀₁, Im σ̄₀₁)`:
///
/// `iΩ(σ̄₀₁ − σ̄₁₀) = −1`,
/// `−Γ₁σ̄₁₁ + iΩ(σ̄₁₀ − σ̄₀₁) = 0`,
/// `iε₁₀σ̄₀₁ + iΩ(σ̄₀₀ − σ̄₁₁) − ½(Γ₁+Γ_d)σ̄₀₁ = 0`.
pub fn time_integrated_block(spec: &LorentzianDosSpec, det: &DetectorSpec) -> Result<SigmaBarBlock, SpectrumError> {
    require_no_background(spec)?;
    let o = spec.omega();
    let g1 = spec.gamma1();
    let g = 0.5 * (g1 + det.gamma_d());
    let eps = spec.detuning();
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 0.0, 0.0, -2.0 * o,
        0.0, -g1, 0.0, 2.0 * o,
        0.0, 0.0, -g, -eps,
        o, -o, eps, -g,
    );
    let b = Vector4::new(-1.0, 0.0, 0.0, 0.0);
    let x = a.lu().solve(&b).ok_or(SpectrumError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SpectrumError::Singular);
    }
    Ok(SigmaBarBlock {
        sbar00: x[0],
        sbar11: x[1],
        sbar01: Complex64::new(x[2], x[3]),
    })
}

/// `(σ̄₀α, σ̄₁α)` at reservoir energy `e_alpha`.
pub fn mode_integrals(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    block: &SigmaBarBlock,
    e_alpha: f64,
) -> Result<(Complex64, Complex64), SpectrumError> {
    let i = Complex64::i();
    let o = spec.omega();
    let a11 = i * (e_alpha - spec.e0()) - 0.5 * det.gamma_d();
    let a22 = i * (e_alpha - spec.e1()) - 0.5 * spec.gamma1();
    let off = -i * o;
    let m = Matrix2::new(a11, off, off, a22);
    let rhs = Vector2::new(-i * o * block.sbar00, -i * o * block.sbar01.conj());
    let x = m.lu().solve(&rhs).ok_or(SpectrumError::Singular)?;
    Ok((x[0], x[1]))
}

fn density_with(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    block: &SigmaBarBlock,
    e: f64,
) -> Result<f64, SpectrumError> {
    let (a, _) = mode_integrals(spec, det, block, e)?;
    Ok(2.0 * spec.omega() * a.im * spec.dos(e))
}

/// `P(E_α)` for the measured (or, with `Γ_d = 0`, unmeasured) Lorentzian model.
pub fn spectral_density(spec: &LorentzianDosSpec, det: &DetectorSpec, e_alpha: f64) -> Result<f64, SpectrumError> {
    let block = time_integrated_block(spec, det)?;
    density_with(spec, det, &block, e_alpha)
}

/// Unmeasured line shape
/// `Ω²[(E_α−E₁)² + Γ₁²/4] / |(ε_α0 + iΓ̄/2)(ε_α1 + iΓ₁/2) − Ω²|² · ρ(E_α)`.
pub fn unmeasured_spectrum_closed(spec: &LorentzianDosSpec, e_alpha: f64) -> f64 {
    let o2 = spec.omega() * spec.omega();
    let d1 = e_alpha - spec.e1();
    let h1 = 0.5 * spec.gamma1();
    let a = Complex64::new(e_alpha - spec.e0(), 0.5 * spec.gamma_bar());
    let b = Complex64::new(d1, h1);
    let den = (a * b - o2).norm_sqr();
    o2 * (d1 * d1 + h1 * h1) / den * spec.dos(e_alpha)
}

/// Lorentzian of width `Γ₀ + Γ_d` centred on `E0`.
pub fn constant_spectrum_closed(spec: &ConstantWidthSpec, det: &DetectorSpec, e_alpha: f64) -> f64 {
    let w = spec.gamma0() + det.gamma_d();
    let eps = spec.e0() - e_alpha;
    w / (2.0 * PI) / (eps * eps + 0.25 * w * w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub energy: f64,
    pub height: f64,
    pub prominence: f64,
}

/// `P(E_α)` sampled on ascending energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    label: String,
    params: Vec<(String, f64)>,
    energies: Vec<f64>,
    density: Vec<f64>,
}

fn check_energies(energies: &[f64]) -> Result<(), SpectrumError> {
    if energies.iter().all(|e| e.is_finite()) && energies.windows(2).all(|w| w[1] > w[0]) {
        Ok(())
    } else {
        Err(SpectrumError::Energies)
    }
}

impl Spectrum {
    pub fn new(label: impl Into<String>, energies: Vec<f64>, density: Vec<f64>) -> Result<Self, SpectrumError> {
        check_energies(&energies)?;
        if energies.len() != density.len() || density.iter().any(|p| !p.is_finite()) {
            return Err(SpectrumError::Energies);
        }
        Ok(Self {
            label: label.into(),
            params: Vec::new(),
            energies,
            density,
        })
    }

    /// Samples `f` on `energies` (in parallel, output ordered by energy).
    pub fn sample<F>(label: impl Into<String>, energies: Vec<f64>, f: F) -> Result<Self, SpectrumError>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        check_energies(&energies)?;
        let density = energies.par_iter().map(|&e| f(e)).collect();
        Self::new(label, energies, density)
    }

    pub fn with_params(mut self, params: Vec<(String, f64)>) -> Self {
        self.params = params;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Trapezoid estimate of `∫P dE` over the sampled window.
    pub fn integral(&self) -> f64 {
        self.energies
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(e, p)| 0.5 * (e[1] - e[0]) * (p[0] + p[1]))
            .sum()
    }

    pub fn argmax(&self) -> Option<usize> {
        self.density
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
                Some((_, q)) if q >= p => best,
                _ => Some((i, p)),
            })
            .map(|(i, _)| i)
    }

    pub fn max(&self) -> f64 {
        self.argmax().map(|i| self.density[i]).unwrap_or(0.0)
    }

    /// Interior local maxima whose prominence exceeds `1e-3` of the global
    /// maximum, ordered by energy.
    pub fn peaks(&self) -> Vec<Peak> {
        let p = &self.density;
        let n = p.len();
        let threshold = 1e-3 * self.max();
        let mut out = Vec::new();
        let mut i = 1;
        while i + 1 < n {
            if p[i] > p[i - 1] {
                // Walk across a plateau.
                let mut j = i;
                while j + 1 < n && p[j + 1] == p[i] {
                    j += 1;
                }
                if j + 1 < n && p[j + 1] < p[i] {
                    let peak = (i + j) / 2;
                    let prominence = self.prominence(peak);
                    if prominence >= threshold {
                        out.push(Peak {
                            index: peak,
                            energy: self.energies[peak],
                            height: p[peak],
                            prominence,
                        });
                    }
                }
                i = j + 1;
            } else {
                i += 1;
            }
        }
        out
    }

    fn prominence(&self, k: usize) -> f64 {
        let p = &self.density;
        let h = p[k];
        let mut left = h;
        for &v in p[..k].iter().rev() {
            if v > h {
                break;
            }
            left = left.min(v);
        }
        let mut right = h;
        for &v in &p[k + 1..] {
            if v > h {
                break;
            }
            right = right.min(v);
        }
        h - left.max(right)
    }

    /// Half-maximum crossings around sample `k`, linearly interpolated.
    fn half_width_at(&self, k: usize) -> Result<(f64, f64), SpectrumError> {
        let (e, p) = (&self.energies, &self.density);
        let half = 0.5 * p[k];
        let mut l = k;
        while l > 0 && p[l] > half {
            l -= 1;
        }
        let mut r = k;
        while r + 1 < p.len() && p[r] > half {
            r += 1;
        }
        if p[l] > half || p[r] > half {
            return Err(SpectrumError::WindowTooNarrow(e[k]));
        }
        let cross = |a: usize, b: usize| e[a] + (half - p[a]) * (e[b] - e[a]) / (p[b] - p[a]);
        Ok((cross(l, l + 1), cross(r - 1, r)))
    }

    /// Full width at half maximum of the dominant peak.
    pub fn fwhm(&self) -> Result<f64, SpectrumError> {
        let k = self.argmax().ok_or(SpectrumError::Empty)?;
        if k == 0 || k + 1 == self.len() {
            return Err(SpectrumError::WindowTooNarrow(self.energies[k]));
        }
        let (lo, hi) = self.half_width_at(k)?;
        Ok(hi - lo)
    }

    /// Per-peak widths at half of each peak's own height.
    pub fn peak_widths(&self) -> Vec<(Peak, Result<f64, SpectrumError>)> {
        self.peaks()
            .into_iter()
            .map(|pk| {
                let w = self.half_width_at(pk.index).map(|(a, b)| b - a);
                (pk, w)
            })
            .collect()
    }

    /// Writes `#` metadata (label, parameters, integral), `E_alpha,P` and the samples.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# variant={}", self.label)?;
        for (k, v) in &self.params {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# integral={:.16e}", self.integral())?;
        writeln!(out, "E_alpha,P")?;
        for (e, p) in self.energies.iter().zip(&self.density) {
            writeln!(out, "{e:.16e},{p:.16e}")?;
        }
        Ok(())
    }
}

fn lorentzian_params(spec: &LorentzianDosSpec, det: &DetectorSpec) -> Vec<(String, f64)> {
    vec![
        ("E0".into(), spec.e0()),
        ("E1".into(), spec.e1()),
        ("Omega".into(), spec.omega()),
        ("Gamma1".into(), spec.gamma1()),
        ("D".into(), det.d()),
        ("Dprime".into(), det.d_prime()),
        ("GammaD".into(), det.gamma_d()),
    ]
}

/// `P(E_α)` on the given ascending energies.
pub fn spectrum_scan(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    energies: &[f64],
) -> Result<Spectrum, SpectrumError> {
    check_energies(energies)?;
    let block = time_integrated_block(spec, det)?;
    let density = energies
        .par_iter()
        .map(|&e| density_with(spec, det, &block, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Spectrum::new("measured_lorentzian", energies.to_vec(), density)?.with_params(lorentzian_params(spec, det)))
}

/// `n` equally spaced energies on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Energies where the line has structure: the levels and the real parts of
/// the complex poles, with the corresponding widths.
fn features(spec: &LorentzianDosSpec, det: &DetectorSpec) -> Vec<(f64, f64)> {
    let o = spec.omega();
    let (e0, e1) = (spec.e0(), spec.e1());
    let h0 = Complex64::new(e0, -0.5 * det.gamma_d());
    let h1 = Complex64::new(e1, -0.5 * spec.gamma1());
    let mean = 0.5 * (h0 + h1);
    let split = (0.25 * (h0 - h1) * (h0 - h1) + o * o).sqrt();
    let mut out = vec![(e0, det.gamma_d().max(1e-3 * o)), (e1, spec.gamma1())];
    for pole in [mean + split, mean - split] {
        out.push((pole.re, (-2.0 * pole.im).max(1e-12)));
    }
    out
}

/// Window `[lo, hi]` whose ε⁻⁴ tails hold less than `tail` of the probability.
pub fn normalization_window(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    tail: f64,
) -> Result<(f64, f64), SpectrumError> {
    let block = time_integrated_block(spec, det)?;
    let (e0, e1) = (spec.e0(), spec.e1());
    let center = 0.5 * (e0 + e1);
    let mut half = (e1 - e0).abs() + 10.0 * (spec.gamma1() + det.gamma_d() + spec.omega());
    loop {
        let lo = center - half;
        let hi = center + half;
        // ∫_L^∞ C/ε⁴ dε = P(L)·L/3
        let left = density_with(spec, det, &block, lo)? * (lo - center).abs() / 3.0;
        let right = density_with(spec, det, &block, hi)? * (hi - center).abs() / 3.0;
        if left + right <= tail || half > 1e12 {
            return Ok((lo, hi));
        }
        half *= 2.0;
    }
}

fn simpson_points<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: u32,
    out: &mut Vec<(f64, f64)>,
) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        out.push((lm, flm));
        out.push((m, fm));
        out.push((rm, frm));
        return;
    }
    simpson_points(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1, out);
    out.push((m, fm));
    simpson_points(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1, out);
}

/// `P(E_α)` on `[lo, hi]` with samples refined until the local quadrature
/// error is below `tol`. Seeds are placed geometrically around the line's
/// features so narrow peaks are never stepped over.
pub fn adaptive_scan(
    spec: &LorentzianDosSpec,
    det: &DetectorSpec,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Spectrum, SpectrumError> {
    if !(lo < hi) {
        return Err(SpectrumError::Energies);
    }
    let block = time_integrated_block(spec, det)?;
    // Non-singular for Γ₁ > 0, so evaluation cannot fail past this point.
    let f = |e: f64| density_with(spec, det, &block, e).unwrap_or(f64::NAN);
    let mut seeds = linspace(lo, hi, 65);
    for (c, w) in features(spec, det) {
        let mut d = 1e-2 * w;
        seeds.push(c);
        while d < hi - lo {
            seeds.push(c - d);
            seeds.push(c + d);
            d *= 1.25;
        }
    }
    seeds.retain(|e| (lo..=hi).contains(e));
    seeds.sort_by(f64::total_cmp);
    seeds.dedup();
    let values: Vec<f64> = seeds.par_iter().map(|&e| f(e)).collect();

    let pieces: Vec<Vec<(f64, f64)>> = seeds
        .par_windows(2)
        .zip(values.par_windows(2))
        .map(|(e, p)| {
            let mut pts = Vec::new();
            let m = 0.5 * (e[0] + e[1]);
            let piece_tol = tol * (e[1] - e[0]) / (hi - lo);
            simpson_points(&f, e[0], e[1], p[0], f(m), p[1], piece_tol, 40, &mut pts);
            pts
        })
        .collect();
    let mut samples: Vec<(f64, f64)> = seeds.iter().copied().zip(values).collect();
    for piece in pieces {
        samples.extend(piece);
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    let (energies, density) = samples.into_iter().unzip();
    Ok(Spectrum::new("measured_lorentzian", energies, density)?.with_params(lorentzian_params(spec, det)))
}

/// Spectrum over a window holding all but `1e-4` of the probability.
pub fn normalized_spectrum(spec: &LorentzianDosSpec, det: &DetectorSpec) -> Result<Spectrum, SpectrumError> {
    let (lo, hi) = normalization_window(spec, det, 1e-4)?;
    adaptive_scan(spec, det, lo, hi, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aligned(gamma1: f64) -> LorentzianDosSpec {
        LorentzianDosSpec::new(0.0, 0.0, 1.0, gamma1, 0.0).unwrap()
    }

    #[test]
    fn block_identities() {
        for (e1, g1, d, dp) in [
            (0.0, 10.0, 0.0, 0.0),
            (10.0, 10.0, 10.0, 0.0),
            (5.0, 0.5, 4.0, 1.0),
            (-2.0, 3.0, 0.2, 7.0),
        ] {
            let spec = LorentzianDosSpec::new(0.0, e1, 1.0, g1, 0.0).unwrap();
            let det = DetectorSpec::new(d, dp).unwrap();
            let b = time_integrated_block(&spec, &det).unwrap();
            assert!((b.sbar01.im - 0.5).abs() < 1e-12);
            assert!((g1 * b.sbar11 - 1.0).abs() < 1e-12);
            assert!(b.sbar00 > 0.0);
        }
    }

    #[test]
    fn background_is_rejected() {
        let spec = LorentzianDosSpec::new(0.0, 0.0, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            time_integrated_block(&spec, &DetectorSpec::off()),
            Err(SpectrumError::Background(_))
        ));
    }

    #[test]
    fn aligned_peak_values() {
        let p0 = spectral_density(&aligned(10.0), &DetectorSpec::off(), 0.0).unwrap();
        assert!((p0 - 10.0 / (2.0 * PI)).abs() < 1e-12);
        let det = DetectorSpec::new(10.0, 0.0).unwrap();
        let p10 = spectral_density(&aligned(10.0), &det, 0.0).unwrap();
        assert!((p10 - 40.0 / (104.0 * PI)).abs() < 1e-12);
        assert!((unmeasured_spectrum_closed(&aligned(10.0), 0.0) - 10.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn constant_line() {
        let spec = ConstantWidthSpec::new(0.0, 1.0).unwrap();
        let det = DetectorSpec::new(3.0, 0.0).unwrap();
        let peak = constant_spectrum_closed(&spec, &det, 0.0);
        assert!((peak - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let off = constant_spectrum_closed(&spec, &DetectorSpec::off(), 0.5);
        assert!((off - 0.5 * 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn fwhm_of_lorentzian() {
        let spec = ConstantWidthSpec::new(0.0, 1.0).unwrap();
        let e = linspace(-20.0, 20.0, 4001);
        let s = Spectrum::sample("constant", e, |x| {
            constant_spectrum_closed(&spec, &DetectorSpec::off(), x)
        })
        .unwrap();
        assert!((s.fwhm().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fwhm_rejects_boundary_peak() {
        let s = Spectrum::new("x", vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 1.0]).unwrap();
        assert!(matches!(s.fwhm(), Err(SpectrumError::WindowTooNarrow(_))));
        let s = Spectrum::new("x", vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0, 1.9]).unwrap();
        assert!(matches!(s.fwhm(), Err(SpectrumError::WindowTooNarrow(_))));
    }

    #[test]
    fn peak_detection() {
        let e = linspace(-10.0, 10.0, 2001);
        let s = Spectrum::sample("two", e, |x| {
            (-(x + 3.0) * (x + 3.0)).exp() + 0.5 * (-(x - 4.0) * (x - 4.0)).exp()
        })
        .unwrap();
        let peaks = s.peaks();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].energy + 3.0).abs() < 1e-9);
        assert!((peaks[1].energy - 4.0).abs() < 1e-9);
        // Ripples far below the threshold are ignored.
        let s = Spectrum::sample("rip", linspace(-10.0, 10.0, 2001), |x| {
            (-x * x).exp() + 1e-5 * (20.0 * x).sin()
        })
        .unwrap();
        assert_eq!(s.peaks().len(), 1);
    }

    #[test]
    fn scan_rejects_unsorted() {
        assert_eq!(
            spectrum_scan(&aligned(1.0), &DetectorSpec::off(), &[1.0, 0.0]).unwrap_err(),
            SpectrumError::Energies
        );
    }

    #[test]
    fn csv_layout() {
        let s = Spectrum::new("x", vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# variant=x");
        assert_eq!(lines[1], "# integral=5.0000000000000000e-1");
        assert_eq!(lines[2], "E_alpha,P");
        assert_eq!(lines.len(), 5);
    }
}
