//! Eigenvalue computations, the symmetrised internal spectrum and its gaps.

use faer::linalg::solvers::{Lblt, Solve};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{adjoint_matmul, c, hermitian_eigen, hermitian_eigenvalues, matmul, OperatorMatrix, ZERO};
use crate::C64;

pub const DEFAULT_DENSE_CAP: usize = 6000;
/// Largest dimension for which a dense `LBL*` factorisation is attempted in
/// [`eig_window`].
pub const DEFAULT_FACTOR_CAP: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Dense,
    Lanczos,
    ShiftInvert,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    /// Clustered eigenvalues, strictly increasing.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub method: SpectrumMethod,
    /// Largest `‖Mv − λv‖` within each cluster (0 when vectors were not
    /// computed).
    pub residual_norms: Vec<f64>,
    /// Every eigenvalue with repetition, ascending.
    pub raw: Vec<f64>,
    pub resolution: f64,
    #[serde(skip)]
    pub vectors: Option<Mat<C64>>,
}

impl SpectrumResult {
    pub fn from_raw(mut raw: Vec<f64>, tol: f64, method: SpectrumMethod, vectors: Option<Mat<C64>>, residuals: Option<Vec<f64>>) -> Self {
        raw.sort_by(f64::total_cmp);
        let clusters = cluster(&raw, tol);
        let mut residual_norms = Vec::with_capacity(clusters.len());
        let mut start = 0;
        for &(_, count) in &clusters {
            let r = residuals.as_ref().map_or(0.0, |r| r[start..start + count].iter().fold(0.0, |a: f64, b| a.max(*b)));
            residual_norms.push(r);
            start += count;
        }
        SpectrumResult {
            eigenvalues: clusters.iter().map(|c| c.0).collect(),
            multiplicities: clusters.iter().map(|c| c.1).collect(),
            method,
            residual_norms,
            raw,
            resolution: tol,
            vectors,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Groups sorted values into chains whose neighbours differ by at most `tol`;
/// returns `(mean, count)` per chain.
pub fn cluster(sorted: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut last = f64::NEG_INFINITY;
    for &v in sorted {
        if count > 0 && v - last > tol {
            out.push((sum / count as f64, count));
            sum = 0.0;
            count = 0;
        }
        sum += v;
        count += 1;
        last = v;
    }
    if count > 0 {
        out.push((sum / count as f64, count));
    }
    out
}

pub fn default_cluster_tol(norm: f64) -> f64 {
    f64::max(1e-8, 1e-6 * norm)
}

/// Max absolute difference of sorted pairings; `+∞` on length mismatch.
pub fn multiset_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn residuals(m: &OperatorMatrix, vals: &[f64], vecs: &Mat<C64>) -> Vec<f64> {
    let mv = m.apply_mat(vecs.as_ref());
    (0..vals.len())
        .map(|j| (0..vecs.nrows()).map(|i| (mv[(i, j)] - vecs[(i, j)] * vals[j]).norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

/// Full spectrum by dense diagonalisation.
pub fn eig_dense(m: &OperatorMatrix, cap: usize, want_vectors: bool) -> Result<SpectrumResult> {
    if m.dim() > cap {
        return Err(Error::DenseCapExceeded { dim: m.dim(), cap });
    }
    let d = m.to_dense();
    let tol = default_cluster_tol(m.norm_bound());
    if want_vectors {
        let (vals, vecs) = hermitian_eigen(d.as_ref())?;
        let res = residuals(m, &vals, &vecs);
        Ok(SpectrumResult::from_raw(vals, tol, SpectrumMethod::Dense, Some(vecs), Some(res)))
    } else {
        let vals = hermitian_eigenvalues(d.as_ref())?;
        Ok(SpectrumResult::from_raw(vals, tol, SpectrumMethod::Dense, None, None))
    }
}

/// Number of negative eigenvalues of the block-diagonal factor.
fn inertia_negative(f: &Lblt<C64>) -> usize {
    let d = f.B_diag().column_vector();
    let s = f.B_subdiag().column_vector();
    let n = d.nrows();
    let mut neg = 0;
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[i] != ZERO {
            let (a, b, e) = (d[i].re, s[i], d[i + 1].re);
            let det = a * e - b.norm_sqr();
            if det < 0.0 {
                neg += 1;
            } else if a + e < 0.0 {
                neg += 2;
            }
            i += 2;
        } else {
            if d[i].re < 0.0 {
                neg += 1;
            }
            i += 1;
        }
    }
    neg
}

fn factor_shifted(m: &OperatorMatrix, shift: f64) -> Lblt<C64> {
    m.shifted_dense(c(shift, 0.0)).lblt(Side::Lower)
}

/// Number of eigenvalues strictly below `x` (Sylvester inertia of `M − x`).
pub fn count_below(m: &OperatorMatrix, x: f64) -> usize {
    inertia_negative(&factor_shifted(m, x))
}

#[derive(Clone, Debug)]
pub struct WindowOptions {
    pub factor_cap: usize,
    pub block_size: usize,
    pub max_basis: usize,
    pub seed: u64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { factor_cap: DEFAULT_FACTOR_CAP, block_size: 8, max_basis: 600, seed: 0x5eed }
    }
}

enum ShiftOp {
    Factor(Lblt<C64>),
    Folded(f64),
}

/// Orthonormalises the columns of `w` against `basis` (twice) and among
/// themselves; columns that collapse are dropped.
fn orthonormalise(basis: &[Vec<C64>], w: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
    use crate::linalg::{axpy, dot, norm, scale_in_place};
    let mut out: Vec<Vec<C64>> = Vec::new();
    for mut v in w {
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(out.iter()) {
                let p = dot(q, &v);
                axpy(-p, q, &mut v);
            }
        }
        let n1 = norm(&v);
        if n1 > 1e-10 * n0 {
            scale_in_place(c(1.0 / n1, 0.0), &mut v);
            out.push(v);
        }
    }
    out
}

/// All eigenvalues in the open window `(lo, hi)` by shift-invert block
/// Lanczos about the midpoint, the count certified by inertia.  Above the
/// factor cap the folded operator `(M − σ)²` is used instead and the count is
/// not certified.
pub fn eig_window(m: &OperatorMatrix, window: (f64, f64), max_count: usize, opts: &WindowOptions) -> Result<SpectrumResult> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty window ({lo}, {hi})")));
    }
    let n = m.dim();
    let norm = m.norm_bound();
    let tol = default_cluster_tol(norm);
    let sigma = 0.5 * (lo + hi);
    let (op, expected) = if n <= opts.factor_cap {
        let k = count_below(m, hi).saturating_sub(count_below(m, lo));
        (ShiftOp::Factor(factor_shifted(m, sigma)), Some(k))
    } else {
        (ShiftOp::Folded(sigma), None)
    };
    if let Some(k) = expected {
        if k > max_count {
            return Err(Error::WindowTooWide { count: k, max_count });
        }
        if k == 0 {
            let method = SpectrumMethod::ShiftInvert;
            return Ok(SpectrumResult::from_raw(Vec::new(), tol, method, Some(Mat::zeros(n, 0)), Some(Vec::new())));
        }
    }
    let apply = |x: &[C64]| -> Vec<C64> {
        match &op {
            ShiftOp::Factor(f) => {
                let rhs = faer::ColRef::from_slice(x).as_mat();
                let s = f.solve(rhs);
                (0..n).map(|i| s[(i, 0)]).collect()
            }
            ShiftOp::Folded(s) => {
                let mut y = m.apply_vec(x);
                crate::linalg::axpy(c(-s, 0.0), x, &mut y);
                let mut z = m.apply_vec(&y);
                crate::linalg::axpy(c(-s, 0.0), &y, &mut z);
                z
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bsize = opts.block_size.max(1).min(n);
    let start: Vec<Vec<C64>> = (0..bsize)
        .map(|_| (0..n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect())
        .collect();
    let mut basis: Vec<Vec<C64>> = orthonormalise(&[], start);
    let mut block_start = 0;
    let max_basis = opts.max_basis.min(n);
    let res_tol = 1e-9 * norm.max(1.0);
    let target = expected.unwrap_or(max_count);
    let mut last: Option<(Vec<f64>, Mat<C64>, Vec<f64>)> = None;
    loop {
        let block_end = basis.len();
        let fresh: Vec<Vec<C64>> = basis[block_start..block_end].iter().map(|v| apply(v)).collect();
        block_start = block_end;
        let mut new = orthonormalise(&basis, fresh);
        if new.is_empty() && basis.len() < max_basis {
            // Invariant subspace reached; continue from a random direction.
            let r: Vec<C64> = (0..n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            new = orthonormalise(&basis, vec![r]);
        }
        let room = max_basis - basis.len();
        new.truncate(room);
        basis.extend(new);
        let grown = basis.len() > block_end;
        let check = basis.len() >= 2 * bsize && (basis.len() / bsize) % 3 == 0 || !grown || basis.len() >= max_basis;
        if check {
            let found = rayleigh_ritz(m, &basis, lo, hi, res_tol)?;
            let done = match expected {
                Some(k) => found.0.len() == k,
                None => !grown || basis.len() >= max_basis,
            };
            last = Some(found);
            if done {
                break;
            }
        }
        if !grown || basis.len() >= max_basis {
            break;
        }
    }
    let (vals, vecs, res) = last.expect("at least one Rayleigh–Ritz pass");
    if let Some(k) = expected {
        if vals.len() != k {
            return Err(Error::LanczosBreakdown(format!(
                "found {} of {} certified eigenvalues in ({lo}, {hi}) with a basis of {}",
                vals.len(),
                k,
                basis.len()
            )));
        }
    } else if vals.len() > target {
        return Err(Error::WindowTooWide { count: vals.len(), max_count });
    }
    let method = if expected.is_some() { SpectrumMethod::ShiftInvert } else { SpectrumMethod::Lanczos };
    Ok(SpectrumResult::from_raw(vals, tol, method, Some(vecs), Some(res)))
}

/// Ritz pairs of `M` on `span(basis)` inside `(lo, hi)` with residual below
/// `res_tol`, ascending.
fn rayleigh_ritz(m: &OperatorMatrix, basis: &[Vec<C64>], lo: f64, hi: f64, res_tol: f64) -> Result<(Vec<f64>, Mat<C64>, Vec<f64>)> {
    let n = m.dim();
    let k = basis.len();
    let q = Mat::from_fn(n, k, |i, j| basis[j][i]);
    let mq = m.apply_mat(q.as_ref());
    let mut proj = adjoint_matmul(q.as_ref(), mq.as_ref());
    for i in 0..k {
        for j in 0..i {
            let avg = 0.5 * (proj[(i, j)] + proj[(j, i)].conj());
            proj[(i, j)] = avg;
            proj[(j, i)] = avg.conj();
        }
        proj[(i, i)] = c(proj[(i, i)].re, 0.0);
    }
    let (theta, y) = hermitian_eigen(proj.as_ref())?;
    let x = matmul(q.as_ref(), y.as_ref());
    let mx = matmul(mq.as_ref(), y.as_ref());
    let mut vals = Vec::new();
    let mut cols = Vec::new();
    let mut res = Vec::new();
    for (j, &t) in theta.iter().enumerate() {
        if !(t > lo && t < hi) {
            continue;
        }
        let r = (0..n).map(|i| (mx[(i, j)] - x[(i, j)] * t).norm_sqr()).sum::<f64>().sqrt();
        if r <= res_tol {
            vals.push(t);
            cols.push(j);
            res.push(r);
        }
    }
    let vecs = Mat::from_fn(n, cols.len(), |i, j| x[(i, cols[j])]);
    Ok((vals, vecs, res))
}

/// `σ(H⁰) ∪ σ(−H⁰)`, clustered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetrizedSpectrum {
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub mu0: f64,
    pub resolution: f64,
    pub source: String,
}

pub fn symmetrize(values: &[f64], tol: f64, source: &str) -> Result<SymmetrizedSpectrum> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("cluster tolerance must be positive".into()));
    }
    let mut all: Vec<f64> = values.iter().flat_map(|&v| [v, -v]).collect();
    all.sort_by(f64::total_cmp);
    // The multiset is exactly odd, so its clusters pair up as i <-> len-1-i;
    // averaging each pair keeps the clustered values exactly odd as well.
    let cl = cluster(&all, tol);
    let len = cl.len();
    let out: Vec<(f64, usize)> = (0..len).map(|i| (0.5 * (cl[i].0 - cl[len - 1 - i].0), cl[i].1)).collect();
    let mu0 = out.iter().fold(f64::INFINITY, |m, v| m.min(v.0.abs()));
    let mu0 = if out.is_empty() { f64::INFINITY } else { mu0 };
    Ok(SymmetrizedSpectrum {
        values: out.iter().map(|v| v.0).collect(),
        multiplicities: out.iter().map(|v| v.1).collect(),
        mu0,
        resolution: tol,
        source: source.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapList {
    pub intervals: Vec<(f64, f64)>,
    pub resolution: f64,
}

/// Maximal open sub-intervals of `range` free of `σ_sym`, at least
/// `min_width` wide.
pub fn find_gaps(sym: &SymmetrizedSpectrum, range: (f64, f64), min_width: f64) -> Result<GapList> {
    if !(min_width > sym.resolution) {
        return Err(Error::InvalidArgument(format!(
            "min_width {min_width} must exceed the resolution {}",
            sym.resolution
        )));
    }
    let (lo, hi) = range;
    let mut edges = vec![lo];
    edges.extend(sym.values.iter().copied().filter(|v| *v > lo && *v < hi));
    edges.push(hi);
    let intervals = edges
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|(a, b)| b - a >= min_width)
        .collect();
    Ok(GapList { intervals, resolution: sym.resolution })
}

/// Predicted spectrum of the 3-D operator from the internal one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sigma3d {
    pub mu0: f64,
    /// `(−∞, −μ₀] ∪ [μ₀, ∞)`, stored as the two finite edges.
    pub lower_edge: f64,
    pub upper_edge: f64,
    pub thresholds: Vec<f64>,
}

impl Sigma3d {
    pub fn is_full_line(&self) -> bool {
        self.mu0 == 0.0
    }

    pub fn contains(&self, e: f64) -> bool {
        e <= self.lower_edge || e >= self.upper_edge
    }

    /// Dispersion branch `±√(e² + ξ²)` of a threshold `e`.
    pub fn branch(&self, e: f64, xi: f64) -> (f64, f64) {
        let r = e.hypot(xi);
        (-r, r)
    }
}

pub fn assemble_sigma_3d(sym: &SymmetrizedSpectrum) -> Sigma3d {
    Sigma3d { mu0: sym.mu0, lower_edge: -sym.mu0, upper_edge: sym.mu0, thresholds: sym.values.clone() }
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
    fn dense_examples() {
        let r = eig_dense(&diag(&[3.0, 1.0, 2.0]), 10, true).unwrap();
        assert_eq!(r.eigenvalues.len(), 3);
        for (a, b) in r.eigenvalues.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(r.multiplicities, vec![1, 1, 1]);
        assert!(matches!(eig_dense(&diag(&[1.0; 5]), 4, false), Err(Error::DenseCapExceeded { .. })));
    }

    #[test]
    fn clustering_groups_chains() {
        assert_eq!(cluster(&[1.0, 1.0 + 1e-9, 2.0], 1e-8), vec![(1.0 + 0.5e-9, 2), (2.0, 1)]);
    }

    #[test]
    fn inertia_counts_match_diagonal() {
        let m = diag(&[-3.0, -1.0, 0.5, 2.0, 2.0, 4.0]);
        assert_eq!(count_below(&m, 0.0), 2);
        assert_eq!(count_below(&m, 3.0), 5);
        assert_eq!(count_below(&m, -5.0), 0);
    }

    #[test]
    fn window_finds_degenerate_pair() {
        let m = diag(&[-3.0, -1.0, 0.5, 0.5, 2.0, 4.0, 7.0, 8.0, 9.0, 10.0]);
        let r = eig_window(&m, (0.0, 1.0), 10, &WindowOptions { block_size: 2, ..Default::default() }).unwrap();
        assert_eq!(r.eigenvalues.len(), 1);
        assert_eq!(r.multiplicities, vec![2]);
        let empty = eig_window(&m, (2.5, 3.5), 10, &WindowOptions::default()).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(eig_window(&m, (-5.0, 20.0), 3, &WindowOptions::default()), Err(Error::WindowTooWide { .. })));
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&[1.0, 3f64.sqrt()], 1e-8, "t").unwrap();
        assert_eq!(s.values, vec![-(3f64.sqrt()), -1.0, 1.0, 3f64.sqrt()]);
        assert_eq!(s.mu0, 1.0);
        let z = symmetrize(&[0.0], 1e-8, "t").unwrap();
        assert_eq!(z.values, vec![0.0]);
        assert_eq!(z.mu0, 0.0);
        let d = symmetrize(&[-2.0, 2.0], 1e-8, "t").unwrap();
        assert_eq!(d.values, vec![-2.0, 2.0]);
        assert_eq!(d.mu0, 2.0);
    }

    #[test]
    fn gap_edge_cases() {
        let s = symmetrize(&[5.0], 1e-8, "t").unwrap();
        assert_eq!(find_gaps(&s, (0.0, 3.0), 0.1).unwrap().intervals, vec![(0.0, 3.0)]);
        assert!(find_gaps(&s, (0.0, 3.0), 10.0).unwrap().intervals.is_empty());
    }

    #[test]
    fn sigma_3d_descriptor() {
        let s = assemble_sigma_3d(&symmetrize(&[1.0], 1e-8, "t").unwrap());
        assert!(s.contains(1.0) && s.contains(-1.0) && !s.contains(0.5));
        let (lo, hi) = s.branch(1.0, 3f64.sqrt());
        assert!((hi - 2.0).abs() < 1e-15 && (lo + 2.0).abs() < 1e-15);
        assert!(assemble_sigma_3d(&symmetrize(&[0.0], 1e-8, "t").unwrap()).is_full_line());
    }
}
