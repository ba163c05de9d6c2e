//! Resolvent matrix elements near the real axis and their behaviour as the
//! imaginary part of the energy shrinks, plus tracking of gap eigenvalues
//! across refinements.

use std::sync::Arc;

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::{c, dot, hermitian_eigen, norm, sub, OperatorMatrix, ONE, ZERO};
use crate::spectra::{cluster, eig_window, SpectrumResult, WindowOptions};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum X3Profile {
    /// `exp(−x₃²/(2w²))`
    GaussianX3 { width: f64 },
    /// `⟨x₃⟩^{−decay}`
    PolynomialX3 { decay: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedVector {
    #[serde(serialize_with = "crate::linalg::complex_serde::vec")]
    pub psi: Vec<C64>,
    /// `‖⟨Q₃⟩^s ψ‖`
    pub weighted_norm: f64,
}

/// Normalised `ψ = p(x₃) ⊗ transverse` with `p` decaying at least like
/// `⟨x₃⟩^{−s−1}`.
pub fn weighted_vector(lattice: &LatticeSpec, s: f64, profile: X3Profile, transverse: &[C64]) -> Result<WeightedVector> {
    if !(s > 0.5) {
        return Err(Error::InvalidArgument(format!("weight exponent s = {s} must exceed 1/2")));
    }
    let b = lattice.layout().block();
    if transverse.len() != b {
        return Err(Error::InvalidArgument(format!("transverse part has length {}, expected {b}", transverse.len())));
    }
    let p: Box<dyn Fn(f64) -> f64> = match profile {
        X3Profile::GaussianX3 { width } if width > 0.0 => Box::new(move |x: f64| (-x * x / (2.0 * width * width)).exp()),
        X3Profile::PolynomialX3 { decay } if decay >= s + 1.0 => Box::new(move |x: f64| (1.0 + x * x).powf(-0.5 * decay)),
        _ => return Err(Error::InvalidArgument(format!("profile {profile:?} is not admissible for s = {s}"))),
    };
    let mut psi = Vec::with_capacity(b * lattice.n3());
    for z in lattice.x3_coords() {
        let w = p(z);
        psi.extend(transverse.iter().map(|v| v * w));
    }
    let n = norm(&psi);
    if n == 0.0 {
        return Err(Error::InvalidArgument("weighted vector vanishes".into()));
    }
    for v in &mut psi {
        *v /= n;
    }
    let q = lattice.x3_coords();
    let wn = psi.iter().enumerate().map(|(i, v)| v.norm_sqr() * (1.0 + q[i / b].powi(2)).powf(s)).sum::<f64>().sqrt();
    Ok(WeightedVector { psi, weighted_norm: wn })
}

/// Centred transverse Gaussian in one spinor component, normalised.
pub fn transverse_gaussian(lattice: &LatticeSpec, width: f64, component: usize) -> Vec<C64> {
    let spin = lattice.spinor_components;
    let mut v = vec![ZERO; lattice.transverse_sites() * spin];
    for (t, x) in lattice.transverse_coords().iter().enumerate() {
        v[t * spin + component] = c((-(x[0] * x[0] + x[1] * x[1]) / (2.0 * width * width)).exp(), 0.0);
    }
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Strategy for `(H − z)⁻¹ψ`.
#[derive(Clone, Debug)]
pub enum ResolventSolver {
    /// Partially pivoted LU of `H − z` per shift.
    DenseLu,
    /// Cached eigendecomposition of `H`.
    Spectral(Arc<(Vec<f64>, Mat<C64>)>),
    /// Lanczos basis of `H` with a least-squares solve of the shifted
    /// tridiagonal system (shifted MINRES).
    ShiftedMinres { max_iterations: usize },
}

impl ResolventSolver {
    pub fn spectral(h: &OperatorMatrix) -> Result<Self> {
        let (v, u) = hermitian_eigen(h.to_dense().as_ref())?;
        Ok(ResolventSolver::Spectral(Arc::new((v, u))))
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match self {
            ResolventSolver::Spectral(s) => Some(&s.0),
            _ => None,
        }
    }
}

pub const RESIDUAL_TOL: f64 = 1e-8;

/// Solves `(H − z)x = ψ`; returns `x` and the relative residual.
pub fn resolvent_apply(solver: &ResolventSolver, h: &OperatorMatrix, z: C64, psi: &[C64]) -> Result<(Vec<C64>, f64)> {
    let hn = h.norm_bound();
    if z.im.abs() < 1e-12 * hn.max(1.0) {
        return Err(Error::NearSingularShift { re: z.re, im: z.im });
    }
    let n = h.dim();
    let x: Vec<C64> = match solver {
        ResolventSolver::DenseLu => {
            let lu = h.shifted_dense(z).partial_piv_lu();
            let s = lu.solve(faer::ColRef::from_slice(psi).as_mat());
            (0..n).map(|i| s[(i, 0)]).collect()
        }
        ResolventSolver::Spectral(dec) => {
            let (vals, u) = (&dec.0, &dec.1);
            let coef = u.adjoint() * faer::ColRef::from_slice(psi);
            let scaled = faer::Col::from_fn(vals.len(), |j| coef[j] / (c(vals[j], 0.0) - z));
            let x = u * &scaled;
            (0..n).map(|i| x[i]).collect()
        }
        ResolventSolver::ShiftedMinres { max_iterations } => shifted_minres(h, z, psi, (*max_iterations).min(n))?,
    };
    let mut r = h.apply_vec(&x);
    for i in 0..n {
        r[i] -= z * x[i] + psi[i];
    }
    let rel = norm(&r) / norm(psi).max(f64::MIN_POSITIVE);
    if rel > RESIDUAL_TOL {
        return Err(Error::SolverBudget { iterations: 0, residual: rel });
    }
    Ok((x, rel))
}

fn shifted_minres(h: &OperatorMatrix, z: C64, psi: &[C64], max_it: usize) -> Result<Vec<C64>> {
    let n = h.dim();
    let beta0 = norm(psi);
    let mut q: Vec<Vec<C64>> = vec![psi.iter().map(|v| v / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_res = f64::INFINITY;
    for k in 0..max_it {
        let mut w = h.apply_vec(&q[k]);
        // Full reorthogonalisation keeps the projected matrix tridiagonal to
        // rounding.
        for _ in 0..2 {
            for qi in &q {
                let p = dot(qi, &w);
                crate::linalg::axpy(-p, qi, &mut w);
            }
        }
        let a = dot(&q[k], &h.apply_vec(&q[k])).re;
        alpha.push(a);
        let b = norm(&w);
        beta.push(b);
        let m = k + 1;
        let done = b <= 1e-14 * h.norm_bound().max(1.0) || m == max_it;
        if m % 10 == 0 || done {
            let t = Mat::from_fn(m + 1, m, |i, j| {
                if i == j {
                    c(alpha[j], 0.0) - z
                } else if i == j + 1 || j == i + 1 {
                    c(beta[i.min(j)], 0.0)
                } else {
                    ZERO
                }
            });
            let rhs = Mat::from_fn(m + 1, 1, |i, _| if i == 0 { c(beta0, 0.0) } else { ZERO });
            let y = t.qr().solve_lstsq(&rhs);
            let mut x = vec![ZERO; n];
            for (j, qj) in q.iter().enumerate().take(m) {
                crate::linalg::axpy(y[(j, 0)], qj, &mut x);
            }
            let mut r = h.apply_vec(&x);
            for i in 0..n {
                r[i] -= z * x[i] + psi[i];
            }
            last_res = norm(&r) / beta0;
            if last_res <= 0.1 * RESIDUAL_TOL || done {
                if last_res > RESIDUAL_TOL {
                    return Err(Error::SolverBudget { iterations: m, residual: last_res });
                }
                return Ok(x);
            }
        }
        q.push(w.iter().map(|v| v / b).collect());
    }
    Err(Error::SolverBudget { iterations: max_it, residual: last_res })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LapScanResult {
    pub lambda: f64,
    pub sign: Sign,
    pub epsilons: Vec<f64>,
    #[serde(serialize_with = "crate::linalg::complex_serde::vec")]
    pub values: Vec<C64>,
    pub diffs: Vec<f64>,
    pub verdict: Verdict,
    #[serde(serialize_with = "crate::linalg::complex_serde::option")]
    pub extrapolated_limit: Option<C64>,
    pub solver_residuals: Vec<f64>,
    /// `Im(value)` has the sign of `Im z` at every level.
    pub sign_invariant: bool,
}

pub const CONVERGENT_RATIO: f64 = 0.75;
/// Growth per halving that counts as a `1/ε` pole; the exact factor 2 is
/// only reached asymptotically.
pub const DIVERGENT_GROWTH: f64 = 1.9;
pub const SPACING_FACTOR: f64 = 5.0;

/// Mean spacing of the four distinct levels nearest `lambda`.
pub fn local_level_spacing(eigenvalues: &[f64], lambda: f64, tol: f64) -> f64 {
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut levels: Vec<f64> = cluster(&sorted, tol).into_iter().map(|c| c.0).collect();
    levels.sort_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()));
    levels.truncate(4);
    if levels.len() < 2 {
        return 0.0;
    }
    let (lo, hi) = levels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    (hi - lo) / (levels.len() - 1) as f64
}

/// `⟨ψ, (H − λ ∓ iε_k)⁻¹ψ⟩` for `ε_k = eps0·2^{−k}` and its verdict.
pub fn lap_scan(
    solver: &ResolventSolver,
    h: &OperatorMatrix,
    lambda: f64,
    psi: &[C64],
    eps0: f64,
    levels: usize,
    sign: Sign,
    level_spacing: f64,
) -> Result<LapScanResult> {
    if levels < 4 {
        return Err(Error::InvalidArgument("lap_scan needs at least 4 levels".into()));
    }
    let floor = SPACING_FACTOR * level_spacing;
    if !(eps0 >= floor) || !(eps0 > 0.0) {
        return Err(Error::EpsilonFloor { eps0, floor });
    }
    let s = match sign {
        Sign::Upper => 1.0,
        Sign::Lower => -1.0,
    };
    let mut epsilons = Vec::with_capacity(levels);
    let mut values = Vec::with_capacity(levels);
    let mut residuals = Vec::with_capacity(levels);
    let mut sign_ok = true;
    for k in 0..levels {
        let eps = eps0 * 0.5f64.powi(k as i32);
        let z = c(lambda, s * eps);
        let (x, res) = resolvent_apply(solver, h, z, psi)?;
        let v = dot(psi, &x);
        sign_ok &= s * v.im >= -1e-12;
        epsilons.push(eps);
        values.push(v);
        residuals.push(res);
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let tail_ratios: Vec<f64> = diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let growth: Vec<f64> = values.windows(2).map(|w| w[1].norm() / w[0].norm()).collect();
    let last = |v: &[f64], k: usize| v[v.len().saturating_sub(k)..].to_vec();
    let convergent = last(&tail_ratios, 2).iter().all(|&r| r <= CONVERGENT_RATIO);
    let divergent = last(&growth, 3).iter().all(|&g| g >= DIVERGENT_GROWTH);
    let verdict = if divergent {
        Verdict::Divergent
    } else if convergent {
        Verdict::Convergent
    } else {
        Verdict::Inconclusive
    };
    let extrapolated_limit = (verdict == Verdict::Convergent).then(|| values[levels - 1] * 2.0 - values[levels - 2]);
    Ok(LapScanResult {
        lambda,
        sign,
        epsilons,
        values,
        diffs,
        verdict,
        extrapolated_limit,
        solver_residuals: residuals,
        sign_invariant: sign_ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapEigenvalue {
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub stable: bool,
    /// The eigenvalue at each refinement level, coarsest first.
    pub history: Vec<f64>,
}

/// Eigenvalues of each refinement level inside `gap`, tracked across levels.
/// Levels are paired in sorted order when the counts agree; the flag is set
/// when the count is constant and no eigenvalue moves by `move_tol` or more.
pub fn gap_eigenvalues(levels: &[OperatorMatrix], gap: (f64, f64), max_count: usize, move_tol: f64, opts: &WindowOptions) -> Result<Vec<GapEigenvalue>> {
    Ok(gap_eigenvalues_from(levels, gap, max_count, move_tol, opts)?.0)
}

/// As [`gap_eigenvalues`], also returning the raw count at each level.
pub fn gap_eigenvalues_from(
    levels: &[OperatorMatrix],
    gap: (f64, f64),
    max_count: usize,
    move_tol: f64,
    opts: &WindowOptions,
) -> Result<(Vec<GapEigenvalue>, Vec<usize>)> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("gap_eigenvalues needs at least one level".into()));
    }
    let spectra: Vec<SpectrumResult> = levels.iter().map(|h| eig_window(h, gap, max_count, opts)).collect::<Result<_>>()?;
    let counts = spectra.iter().map(|s| s.raw.len()).collect();
    Ok((track_levels(&spectra, move_tol), counts))
}

pub fn track_levels(spectra: &[SpectrumResult], move_tol: f64) -> Vec<GapEigenvalue> {
    let finest = spectra.last().unwrap();
    let counts_equal = spectra.iter().all(|s| s.raw.len() == finest.raw.len());
    let mut out = Vec::new();
    let mut start = 0;
    for (mean, count) in cluster(&finest.raw, finest.resolution) {
        let members = start..start + count;
        let history: Vec<f64> = spectra
            .iter()
            .map(|s| {
                if counts_equal {
                    members.clone().map(|i| s.raw[i]).sum::<f64>() / count as f64
                } else {
                    s.raw.iter().copied().min_by(|a, b| (a - mean).abs().total_cmp(&(b - mean).abs())).unwrap_or(f64::NAN)
                }
            })
            .collect();
        let moves_ok = counts_equal
            && spectra.windows(2).all(|w| members.clone().all(|i| (w[1].raw[i] - w[0].raw[i]).abs() < move_tol));
        out.push(GapEigenvalue { eigenvalue: mean, multiplicity: count, stable: moves_ok, history });
        start += count;
    }
    out
}

#[allow(dead_code)]
fn unit(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![ZERO; n];
    v[i] = ONE;
    v
}

#[allow(dead_code)]
fn residual(h: &OperatorMatrix, z: C64, x: &[C64], psi: &[C64]) -> f64 {
    let hx = h.apply_vec(x);
    let zx: Vec<C64> = x.iter().map(|v| v * z).collect();
    norm(&sub(&sub(&hx, &zx), psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{SparseMatrix, SpinorLayout};

    fn diag(v: &[f64]) -> OperatorMatrix {
        let d: Vec<C64> = v.iter().map(|x| c(*x, 0.0)).collect();
        OperatorMatrix::sparse(SparseMatrix::diagonal(&d), true, SpinorLayout::flat(v.len()))
    }

    #[test]
    fn diagonal_resolvent() {
        let h = diag(&[1.0, 2.0]);
        let (x, _) = resolvent_apply(&ResolventSolver::DenseLu, &h, c(0.0, 1.0), &unit(2, 0)).unwrap();
        let want = ONE / c(1.0, -1.0);
        assert!((x[0] - want).norm() < 1e-15 && x[1].norm() < 1e-15);
    }

    #[test]
    fn solvers_agree() {
        let h = diag(&[-2.0, -0.5, 0.3, 1.0, 4.0]);
        let psi: Vec<C64> = (0..5).map(|i| c(1.0 + i as f64, 0.0)).collect();
        let z = c(0.7, 0.01);
        let a = resolvent_apply(&ResolventSolver::DenseLu, &h, z, &psi).unwrap().0;
        let b = resolvent_apply(&ResolventSolver::spectral(&h).unwrap(), &h, z, &psi).unwrap().0;
        let m = resolvent_apply(&ResolventSolver::ShiftedMinres { max_iterations: 50 }, &h, z, &psi).unwrap().0;
        assert!(norm(&sub(&a, &b)) < 1e-12 && norm(&sub(&a, &m)) < 1e-10);
        let _ = residual(&h, z, &a, &psi);
    }

    #[test]
    fn pole_scan_diverges_and_off_pole_converges() {
        let h = diag(&[-1.0, 0.0, 1.0, 2.0]);
        let psi = vec![c(0.5, 0.0); 4];
        let s = ResolventSolver::DenseLu;
        let pole = lap_scan(&s, &h, 1.0, &psi, 0.5, 8, Sign::Upper, 0.0).unwrap();
        assert_eq!(pole.verdict, Verdict::Divergent);
        let off = lap_scan(&s, &h, 0.5, &psi, 0.5, 8, Sign::Lower, 0.0).unwrap();
        assert_eq!(off.verdict, Verdict::Convergent);
        assert!(off.sign_invariant && pole.sign_invariant);
        assert!(matches!(lap_scan(&s, &h, 0.5, &psi, 0.1, 8, Sign::Upper, 1.0), Err(Error::EpsilonFloor { .. })));
    }
}
