//! The admissible step `F`, the lower-bound formula for the projected
//! commutator, and its direct numerical evaluation on dense models.

use std::sync::OnceLock;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::FiberDecomposition;
use crate::linalg::{adjoint_matmul, gauss_legendre, hermitian_eigenvalues, OperatorMatrix};
use crate::spectra::{cluster, SpectrumResult, SymmetrizedSpectrum};
use crate::C64;

/// Non-decreasing step with `F = 0` on `(−∞, 0]` and `F = 1` on `[1, ∞)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothStepF {
    /// Normalised integral of `exp(−1/(t(1−t)))`.
    #[default]
    BumpIntegral,
    /// Bump integral compressed to width `1e-6`.
    HardStep,
}

const HARD_WIDTH: f64 = 1e-6;
const PANELS: usize = 8;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

fn bump_integral(a: f64, b: f64) -> f64 {
    let r = rule();
    let w = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let lo = a + p as f64 * w;
        let (mid, half) = (lo + 0.5 * w, 0.5 * w);
        total += r.0.iter().zip(&r.1).map(|(x, wt)| wt * bump(mid + half * x)).sum::<f64>() * half;
    }
    total
}

fn normaliser() -> f64 {
    static N: OnceLock<f64> = OnceLock::new();
    *N.get_or_init(|| 1.0 / (2.0 * bump_integral(0.0, 0.5)))
}

fn unit_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else if x <= 0.5 {
        normaliser() * bump_integral(0.0, x)
    } else {
        // Reflect so that F(x) + F(1 − x) = 1 holds to rounding.
        1.0 - normaliser() * bump_integral(0.0, 1.0 - x)
    }
}

impl SmoothStepF {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SmoothStepF::BumpIntegral => unit_step(x),
            SmoothStepF::HardStep => unit_step(x / HARD_WIDTH),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            SmoothStepF::BumpIntegral => normaliser() * bump(x),
            SmoothStepF::HardStep => normaliser() * bump(x / HARD_WIDTH) / HARD_WIDTH,
        }
    }
}

/// `inf { F(√(λ²−μ²))·√(λ²−μ²)/|λ| : μ ∈ σ_sym ∩ [0, |λ|] }`, `+∞` for an
/// empty set.
pub fn mourre_lower_bound(lambda: f64, sym: &SymmetrizedSpectrum, f: &SmoothStepF) -> f64 {
    let l = lambda.abs();
    let mut best = f64::INFINITY;
    for &mu in sym.values.iter().filter(|&&m| m >= 0.0) {
        if mu > l + sym.resolution {
            continue;
        }
        let v = if (l - mu).abs() <= sym.resolution || l == 0.0 {
            0.0
        } else {
            let s = (l * l - mu * mu).sqrt();
            f.eval(s) * s / l
        };
        best = best.min(v);
    }
    best
}

/// Worst case of [`mourre_lower_bound`] over the open window `(lo, hi)`.
pub fn window_lower_bound(lo: f64, hi: f64, sym: &SymmetrizedSpectrum, f: &SmoothStepF) -> f64 {
    if hi <= 0.0 {
        return window_lower_bound(-hi, -lo, sym, f);
    }
    if lo < 0.0 {
        return window_lower_bound(0.0, hi, sym, f).min(window_lower_bound(0.0, -lo, sym, f));
    }
    // Each term increases with λ, so its infimum sits at the left edge unless
    // μ itself lies inside the window.
    let mut best = f64::INFINITY;
    for &mu in sym.values.iter().filter(|&&m| m >= 0.0 && m < hi) {
        let v = if mu > lo || lo == 0.0 {
            0.0
        } else {
            let s = (lo * lo - mu * mu).max(0.0).sqrt();
            f.eval(s) * s / lo
        };
        best = best.min(v);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MourreReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub bound_formula: f64,
    pub measured_inf: f64,
    pub window_dim: usize,
    pub satisfied: bool,
}

/// Columns of the dense eigenbasis whose eigenvalue cluster lies in `(lo, hi)`.
pub fn window_columns(eig: &SpectrumResult, lo: f64, hi: f64) -> Vec<usize> {
    let mut cols = Vec::new();
    let mut start = 0;
    for (mean, count) in cluster(&eig.raw, eig.resolution) {
        if mean > lo && mean < hi {
            cols.extend(start..start + count);
        }
        start += count;
    }
    cols
}

fn projected(eig: &SpectrumResult, s: &OperatorMatrix, cols: &[usize]) -> Result<Mat<C64>> {
    let vecs = eig
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("eigenvectors are required for projected forms".into()))?;
    let n = vecs.nrows();
    let v = Mat::from_fn(n, cols.len(), |i, j| vecs[(i, cols[j])]);
    let sv = s.apply_mat(v.as_ref());
    let mut p = adjoint_matmul(v.as_ref(), sv.as_ref());
    let k = cols.len();
    for i in 0..k {
        for j in 0..=i {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)].conj());
            p[(i, j)] = avg;
            p[(j, i)] = avg.conj();
        }
    }
    Ok(p)
}

/// `(dim E, min σ(E S E |ran E))` for `E = E^H((λ−ε, λ+ε))`; the minimum is
/// `+∞` for an empty window.
pub fn rho_measured(eig: &SpectrumResult, s: &OperatorMatrix, lambda: f64, eps: f64) -> Result<(usize, f64)> {
    let cols = window_columns(eig, lambda - eps, lambda + eps);
    if cols.is_empty() {
        return Ok((0, f64::INFINITY));
    }
    let p = projected(eig, s, &cols)?;
    let ev = hermitian_eigenvalues(p.as_ref())?;
    Ok((cols.len(), ev[0]))
}

/// Projected commutator bound on one window.  `s` is `T` for windows above
/// zero and `−T` for the mirrored side.
pub fn verify_mourre_inequality(
    eig: &SpectrumResult,
    s: &OperatorMatrix,
    lambda: f64,
    eps: f64,
    sym: &SymmetrizedSpectrum,
    f: &SmoothStepF,
    tolerance: f64,
) -> Result<MourreReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("window half-width must be positive".into()));
    }
    let (window_dim, measured_inf) = rho_measured(eig, s, lambda, eps)?;
    let bound_formula = window_lower_bound(lambda - eps, lambda + eps, sym, f);
    let satisfied = window_dim == 0 || bound_formula.is_infinite() && measured_inf.is_infinite() || measured_inf >= bound_formula - tolerance;
    Ok(MourreReport { lambda, epsilon: eps, bound_formula, measured_inf, window_dim, satisfied })
}

/// `‖E S₁ E − E S₂ E‖` on `ran E`; the window must stay on one side of 0.
pub fn rho_t_vs_r_check(eig: &SpectrumResult, t: &OperatorMatrix, r: &OperatorMatrix, lambda: f64, eps: f64) -> Result<f64> {
    let (lo, hi) = (lambda - eps, lambda + eps);
    if lo <= 0.0 && hi >= 0.0 {
        return Err(Error::InvalidArgument(format!("window ({lo}, {hi}) touches 0")));
    }
    let cols = window_columns(eig, lo, hi);
    if cols.is_empty() {
        return Ok(0.0);
    }
    let diff = t.add_scaled(crate::linalg::c(-1.0, 0.0), r);
    let p = projected(eig, &diff, &cols)?;
    let ev = hermitian_eigenvalues(p.as_ref())?;
    Ok(ev.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Fiber-wise evaluation of the projected `T`: in the eigenbasis of the
/// fibers `T` is diagonal with entries `F(ξ)ξ/e`, so its minimum over the
/// window is read off directly.  With `positive_momentum_only` the states with
/// `ξ ≤ 0` are left out.
pub fn fiber_rho(fibers: &FiberDecomposition, f: &SmoothStepF, lo: f64, hi: f64, positive_momentum_only: bool) -> (usize, f64) {
    let mut dim = 0;
    let mut best = f64::INFINITY;
    for (vals, &xi) in fibers.values.iter().zip(&fibers.xis) {
        if positive_momentum_only && xi <= 0.0 {
            continue;
        }
        for &e in vals.iter().filter(|&&e| e > lo && e < hi) {
            dim += 1;
            let sgn = if e > 0.0 { 1.0 } else { -1.0 };
            best = best.min(sgn * f.eval(xi) * xi / e);
        }
    }
    (dim, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::symmetrize;

    fn landau() -> SymmetrizedSpectrum {
        symmetrize(&[1.0, 3f64.sqrt(), 5f64.sqrt(), 7f64.sqrt()], 1e-9, "t").unwrap()
    }

    #[test]
    fn step_examples() {
        let f = SmoothStepF::BumpIntegral;
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert!((f.eval(0.5) - 0.5).abs() < 1e-14);
        assert!(f.eval(1e-3) < 1e-300);
        let h = SmoothStepF::HardStep;
        assert_eq!(h.eval(-1e-9), 0.0);
        assert_eq!(h.eval(2e-6), 1.0);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let f = SmoothStepF::BumpIntegral;
        for x in [0.2, 0.4, 0.7, 0.9] {
            let d = (f.eval(x + 1e-5) - f.eval(x - 1e-5)) / 2e-5;
            assert!((d - f.derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn bound_examples() {
        let s = landau();
        let f = SmoothStepF::BumpIntegral;
        assert_eq!(mourre_lower_bound(0.5, &s, &f), f64::INFINITY);
        assert_eq!(mourre_lower_bound(3f64.sqrt(), &s, &f), 0.0);
        assert!((mourre_lower_bound(1.5, &s, &f) - 1.25f64.sqrt() / 1.5).abs() < 1e-12);
        assert_eq!(mourre_lower_bound(-1.5, &s, &f), mourre_lower_bound(1.5, &s, &f));
    }

    #[test]
    fn window_bound_is_left_edge_or_zero() {
        let s = landau();
        let f = SmoothStepF::BumpIntegral;
        assert_eq!(window_lower_bound(1.5, 1.8, &s, &f), 0.0);
        let w = window_lower_bound(1.45, 1.55, &s, &f);
        assert!((w - mourre_lower_bound(1.45, &s, &f)).abs() < 1e-15);
        assert_eq!(window_lower_bound(0.2, 0.4, &s, &f), f64::INFINITY);
        assert_eq!(window_lower_bound(-1.55, -1.45, &s, &f), w);
    }
}
