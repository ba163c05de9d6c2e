//! Numerical plumbing shared by every module: complex vectors, a CSR sparse
//! matrix, the [`OperatorMatrix`] wrapper with its spinor layout, thin
//! wrappers over the dense `faer` kernels, and a few quadrature helpers.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::C64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `<a, b>` with the first argument conjugated.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale_in_place(alpha: C64, x: &mut [C64]) {
    for v in x {
        *v *= alpha;
    }
}

/// Compressed sparse row matrix, square, complex.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Assembles from unsorted triplets; duplicates are summed and exact zeros
    /// dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            debug_assert!(i < n && j < n);
            if let (Some(&last_row), Some(&last_col)) = (rows.last(), col_idx.last()) {
                if last_row == i && last_col == j {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            col_idx.push(j);
            values.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, cidx), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != ZERO {
                keep_rows.push(r);
                keep_cols.push(cidx);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n, row_ptr, col_idx: keep_cols, values: keep_vals }
    }

    pub fn zeros(n: usize) -> Self {
        SparseMatrix { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![ONE; n])
    }

    pub fn diagonal(d: &[C64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn from_dense(m: MatRef<'_, C64>) -> Self {
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != ZERO {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => ZERO,
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, alpha: C64, other: &SparseMatrix) -> Self {
        assert_eq!(self.n, other.n);
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.n, t)
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect())
    }

    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = Vec::new();
        for i in 0..self.n {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    t.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// Kronecker product `a ⊗ b`.
    pub fn kron(a: &SparseMatrix, b: &SparseMatrix) -> Self {
        let nb = b.n;
        let mut t = Vec::with_capacity(a.nnz() * b.nnz());
        for (i, j, v) in a.triplets() {
            for (k, l, w) in b.triplets() {
                t.push((i * nb + k, j * nb + l, v * w));
            }
        }
        Self::from_triplets(a.n * nb, t)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Max absolute row sum; an upper bound on the spectral norm.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        self.add_scaled(c(-1.0, 0.0), other).max_abs_entry()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }
}

/// Memory layout of lattice vectors: `index = (i3 * transverse + t) * spinor + s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpinorLayout {
    pub x3_sites: usize,
    pub transverse_sites: usize,
    pub spinor: usize,
}

impl SpinorLayout {
    pub fn new(x3_sites: usize, transverse_sites: usize, spinor: usize) -> Self {
        SpinorLayout { x3_sites, transverse_sites, spinor }
    }

    /// Layout without lattice structure (plain `n`-dimensional space).
    pub fn flat(n: usize) -> Self {
        SpinorLayout { x3_sites: 1, transverse_sites: n, spinor: 1 }
    }

    pub fn dim(&self) -> usize {
        self.x3_sites * self.transverse_sites * self.spinor
    }

    /// Dimension of one `x3` slice (one fiber block).
    pub fn block(&self) -> usize {
        self.transverse_sites * self.spinor
    }

    pub fn index(&self, i3: usize, t: usize, s: usize) -> usize {
        (i3 * self.transverse_sites + t) * self.spinor + s
    }
}

/// Operator that is block-diagonal after a unitary transform along `x3`:
/// `M = (D^* ⊗ 1) (⊕_k M_k) (D ⊗ 1)`, with `D` the unitary DFT on the
/// `x3` ring.
#[derive(Clone, Debug)]
pub struct FiberFunction {
    pub dft: Mat<C64>,
    pub blocks: Vec<Mat<C64>>,
}

impl FiberFunction {
    pub fn n3(&self) -> usize {
        self.dft.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.n3() * self.block_dim()
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n3 = self.n3();
        let b = self.block_dim();
        // Row i3 of X is the x3 slice i3; store X^T column-major so that
        // slices are contiguous: xt has shape (b, n3).
        let xt = MatRef::from_column_major_slice(x, b, n3);
        // hat^T = X^T D^T
        let mut hat_t = Mat::<C64>::zeros(b, n3);
        faer::linalg::matmul::matmul(
            hat_t.as_mut(),
            Accum::Replace,
            xt,
            self.dft.transpose(),
            ONE,
            Par::Seq,
        );
        let mut out_hat_t = Mat::<C64>::zeros(b, n3);
        for k in 0..n3 {
            faer::linalg::matmul::matmul(
                out_hat_t.as_mut().col_mut(k).as_mat_mut(),
                Accum::Replace,
                self.blocks[k].as_ref(),
                hat_t.as_ref().col(k).as_mat(),
                ONE,
                Par::Seq,
            );
        }
        // Y^T = hat^T conj(D)
        let mut yt = Mat::<C64>::zeros(b, n3);
        faer::linalg::matmul::matmul(
            yt.as_mut(),
            Accum::Replace,
            out_hat_t.as_ref(),
            self.dft.conjugate(),
            ONE,
            Par::Seq,
        );
        for i3 in 0..n3 {
            for j in 0..b {
                y[i3 * b + j] = yt[(j, i3)];
            }
        }
    }
}

/// Storage backing an [`OperatorMatrix`].
#[derive(Clone, Debug)]
pub enum Storage {
    Sparse(SparseMatrix),
    Dense(Mat<C64>),
    Fiber(Arc<FiberFunction>),
}

/// Lattice operator: a square complex matrix with its spinor layout and a
/// Hermiticity flag.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub storage: Storage,
    pub hermitian: bool,
    pub layout: SpinorLayout,
}

impl OperatorMatrix {
    pub fn sparse(m: SparseMatrix, hermitian: bool, layout: SpinorLayout) -> Self {
        assert_eq!(m.dim(), layout.dim());
        OperatorMatrix { storage: Storage::Sparse(m), hermitian, layout }
    }

    pub fn dense(m: Mat<C64>, hermitian: bool, layout: SpinorLayout) -> Self {
        assert_eq!(m.nrows(), layout.dim());
        OperatorMatrix { storage: Storage::Dense(m), hermitian, layout }
    }

    pub fn fiber(f: FiberFunction, hermitian: bool, layout: SpinorLayout) -> Self {
        assert_eq!(f.dim(), layout.dim());
        OperatorMatrix { storage: Storage::Fiber(Arc::new(f)), hermitian, layout }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn as_sparse(&self) -> Option<&SparseMatrix> {
        match &self.storage {
            Storage::Sparse(s) => Some(s),
            _ => None,
        }
    }

    /// Sparse form, converting dense storage when needed.
    pub fn to_sparse(&self) -> SparseMatrix {
        match &self.storage {
            Storage::Sparse(s) => s.clone(),
            _ => SparseMatrix::from_dense(self.to_dense().as_ref()),
        }
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse(s) => s.nnz(),
            _ => self.dim() * self.dim(),
        }
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        match &self.storage {
            Storage::Sparse(s) => s.matvec(x, y),
            Storage::Dense(m) => {
                let xr = MatRef::from_column_major_slice(x, x.len(), 1);
                let mut out = Mat::<C64>::zeros(m.nrows(), 1);
                faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, m.as_ref(), xr, ONE, Par::Seq);
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = out[(i, 0)];
                }
            }
            Storage::Fiber(f) => f.apply(x, y),
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Applies the operator to every column of `x`.
    pub fn apply_mat(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = Mat::<C64>::zeros(m.nrows(), x.ncols());
                faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, m.as_ref(), x, ONE, Par::Seq);
                out
            }
            _ => {
                let n = self.dim();
                let mut out = Mat::<C64>::zeros(n, x.ncols());
                let mut buf = vec![ZERO; n];
                let mut col = vec![ZERO; n];
                for j in 0..x.ncols() {
                    for i in 0..n {
                        col[i] = x[(i, j)];
                    }
                    self.apply(&col, &mut buf);
                    for i in 0..n {
                        out[(i, j)] = buf[i];
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        match &self.storage {
            Storage::Sparse(s) => s.to_dense(),
            Storage::Dense(m) => m.clone(),
            Storage::Fiber(_) => self.apply_mat(Mat::<C64>::identity(self.dim(), self.dim()).as_ref()),
        }
    }

    /// `max |M - M^*|`, the entry-wise Hermiticity defect.
    pub fn hermiticity_residual(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(s) => s.hermiticity_residual(),
            _ => {
                let d = self.to_dense();
                let n = d.nrows();
                let mut r = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        r = r.max((d[(i, j)] - d[(j, i)].conj()).norm());
                    }
                }
                r
            }
        }
    }

    /// Cheap upper bound on the operator norm (max absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(s) => s.inf_norm(),
            _ => {
                let d = self.to_dense();
                (0..d.nrows())
                    .map(|i| (0..d.ncols()).map(|j| d[(i, j)].norm()).sum::<f64>())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// `self + alpha * other`, kept sparse when both operands are.
    pub fn add_scaled(&self, alpha: C64, other: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), other.dim());
        let hermitian = self.hermitian && other.hermitian && alpha.im == 0.0;
        match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => {
                OperatorMatrix::sparse(a.add_scaled(alpha, b), hermitian, self.layout)
            }
            _ => {
                let mut a = self.to_dense();
                let b = other.to_dense();
                for j in 0..a.ncols() {
                    for i in 0..a.nrows() {
                        a[(i, j)] += alpha * b[(i, j)];
                    }
                }
                OperatorMatrix::dense(a, hermitian, self.layout)
            }
        }
    }

    /// `M - shift * 1` as a dense matrix.
    pub fn shifted_dense(&self, shift: C64) -> Mat<C64> {
        let mut d = self.to_dense();
        for i in 0..d.nrows() {
            d[(i, i)] -= shift;
        }
        d
    }

    /// Writes the coordinate-list text form: a `dimension nnz` header, then
    /// one `i j re im` row per stored entry.
    pub fn write_coo<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let s = self.to_sparse();
        writeln!(w, "{} {}", s.dim(), s.nnz())?;
        for (i, j, v) in s.triplets() {
            writeln!(w, "{} {} {:.17e} {:.17e}", i, j, v.re, v.im)?;
        }
        Ok(())
    }
}

/// Eigen-decomposition of a dense Hermitian matrix: ascending eigenvalues and
/// orthonormal eigenvectors (columns).
pub fn hermitian_eigen(m: MatRef<'_, C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LanczosBreakdown(format!("dense eigensolver failed: {e:?}")))?;
    let vals = (0..m.nrows()).map(|i| e.S().column_vector()[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn hermitian_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let mut v = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LanczosBreakdown(format!("dense eigensolver failed: {e:?}")))?;
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    let mut out = Mat::<C64>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// `a^* b`
pub fn adjoint_matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    a.adjoint() * b
}

/// Solves `A X = B` by partially pivoted LU.
pub fn lu_solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    let lu = a.partial_piv_lu();
    lu.solve(b)
}

pub fn col_to_vec(m: MatRef<'_, C64>, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Integrates `f` over `[a, b]` with an `n`-point Gauss–Legendre rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Least-squares slope of `log y` against `log x` over the points with
/// `y > 0`; `None` when fewer than two such points exist.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Serialises complex vectors as `[[re, im], ...]`.
pub mod complex_serde {
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    use crate::C64;

    pub fn vec<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for z in v {
            seq.serialize_element(&[z.re, z.im])?;
        }
        seq.end()
    }

    pub fn option<S: Serializer>(v: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(z) => s.serialize_some(&[z.re, z.im]),
            None => s.serialize_none(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let v = integrate(|x| x.powi(15) + 3.0 * x.powi(4), 0.0, 1.0, &rule);
        assert!((v - (1.0 / 16.0 + 3.0 / 5.0)).abs() < 1e-14);
        let w: f64 = gauss_legendre(32).1.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(
            3,
            vec![(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 1.0)), (2, 2, c(1.0, 0.0)), (2, 2, c(-1.0, 0.0))],
        );
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0, 1.0));
        assert_eq!(m.get(2, 2), ZERO);
    }

    #[test]
    fn kron_matches_dense_definition() {
        let a = SparseMatrix::from_triplets(2, vec![(0, 1, c(1.0, 2.0)), (1, 0, c(3.0, 0.0))]);
        let b = SparseMatrix::from_triplets(2, vec![(0, 0, c(1.0, 0.0)), (1, 1, c(0.0, -1.0))]);
        let k = SparseMatrix::kron(&a, &b);
        assert_eq!(k.get(1, 3), c(1.0, 2.0) * c(0.0, -1.0));
        assert_eq!(k.get(2, 0), c(3.0, 0.0));
        assert_eq!(k.nnz(), 4);
    }

    #[test]
    fn fiber_function_with_identity_blocks_is_identity() {
        let n3 = 6;
        let dft = Mat::from_fn(n3, n3, |k, j| {
            let ph = -2.0 * std::f64::consts::PI * (k * j) as f64 / n3 as f64;
            c(ph.cos(), ph.sin()) / (n3 as f64).sqrt()
        });
        let f = FiberFunction { dft, blocks: vec![Mat::identity(2, 2); n3] };
        let x: Vec<C64> = (0..12).map(|i| c(i as f64, 0.5 * i as f64)).collect();
        let mut y = vec![ZERO; 12];
        f.apply(&x, &mut y);
        assert!(norm(&sub(&x, &y)) < 1e-12);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.7)).collect();
        assert!((fit_power_law(&xs, &ys).unwrap() + 1.7).abs() < 1e-12);
    }
}
