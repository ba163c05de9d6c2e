//! Lattice discretisation of the magnetic Dirac operators.
//!
//! Transverse sites sit at `x = −L/2 + i·h` and are indexed `t = i₁·N₂ + i₂`.
//! Three-dimensional vectors are stored `x3`-slice major, then transverse
//! site, then spinor component (see [`SpinorLayout`]).  The `x3` axis is a
//! periodic ring on which `P₃` is the exact discrete-Fourier derivative.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GaugeField;
use crate::linalg::{
    c, hermitian_eigen, FiberFunction, OperatorMatrix, SparseMatrix, SpinorLayout, I, ONE, ZERO,
};
use crate::mourre::SmoothStepF;
use crate::spinor::{dirac_matrices, pauli, Mat2};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    MagneticPeriodic { flux_quanta: i64 },
    Dirichlet,
}

fn default_spinor() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// `[L₁, L₂]` or `[L₁, L₂, L₃]`
    pub extents: Vec<f64>,
    pub points: Vec<usize>,
    pub boundary: Boundary,
    #[serde(default = "default_spinor")]
    pub spinor_components: usize,
}

impl LatticeSpec {
    /// Square magnetic-periodic box sized so that `B₀ L² = 2π·flux`.
    pub fn magnetic_square(n: usize, flux_quanta: i64, b0: f64) -> Self {
        let l = (2.0 * PI * flux_quanta as f64 / b0).sqrt();
        LatticeSpec {
            extents: vec![l, l],
            points: vec![n, n],
            boundary: Boundary::MagneticPeriodic { flux_quanta },
            spinor_components: 4,
        }
    }

    pub fn with_x3(mut self, n3: usize, l3: f64) -> Self {
        self.extents.truncate(2);
        self.points.truncate(2);
        self.extents.push(l3);
        self.points.push(n3);
        self
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.extents.len();
        if !(d == 2 || d == 3) || self.points.len() != d {
            return Err(Error::Config("lattice needs 2 or 3 matching extents and point counts".into()));
        }
        if self.points.iter().any(|&n| n < 4) {
            return Err(Error::Config("every lattice axis needs at least 4 points".into()));
        }
        if self.extents.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("lattice extents must be positive".into()));
        }
        if !(self.spinor_components == 2 || self.spinor_components == 4) {
            return Err(Error::Config("spinor_components must be 2 or 4".into()));
        }
        Ok(())
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.extents[axis] / self.points[axis] as f64
    }

    pub fn transverse_sites(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn site_index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.points[1] + i2
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.extents[axis] + i as f64 * self.h(axis)
    }

    pub fn transverse_coords(&self) -> Vec<[f64; 2]> {
        let mut v = Vec::with_capacity(self.transverse_sites());
        for i1 in 0..self.points[0] {
            for i2 in 0..self.points[1] {
                v.push([self.coord(0, i1), self.coord(1, i2)]);
            }
        }
        v
    }

    pub fn n3(&self) -> usize {
        if self.dims() == 3 {
            self.points[2]
        } else {
            1
        }
    }

    /// `x3` sample points, the centred sawtooth coordinate `Q₃`.
    pub fn x3_coords(&self) -> Vec<f64> {
        (0..self.n3()).map(|i| self.coord(2, i)).collect()
    }

    /// Fourier momenta `ξ_k = 2πk/L₃` in FFT order; for even `N₃` the Nyquist
    /// mode sits at `−π/h₃`.
    pub fn xi_modes(&self) -> Vec<f64> {
        let n = self.n3();
        let l = self.extents[2];
        (0..n)
            .map(|k| {
                let kk = if k < n.div_ceil(2) { k as i64 } else { k as i64 - n as i64 };
                2.0 * PI * kk as f64 / l
            })
            .collect()
    }

    /// Unitary DFT on the `x3` ring, `D[k][j] = e^{−2πi kj/N}/√N`.
    pub fn dft_matrix(&self) -> Mat<C64> {
        dft_matrix(self.n3())
    }

    pub fn layout(&self) -> SpinorLayout {
        SpinorLayout::new(self.n3(), self.transverse_sites(), self.spinor_components)
    }

    fn check_flux(&self, gauge: &GaugeField) -> Result<()> {
        if let Boundary::MagneticPeriodic { flux_quanta } = self.boundary {
            let b0 = gauge.spec.constant_strength().ok_or_else(|| {
                Error::Config("magnetic_periodic boundary requires a constant field".into())
            })?;
            let product = b0 * self.extents[0] * self.extents[1];
            let target = 2.0 * PI * flux_quanta as f64;
            if (product - target).abs() > 1e-9 * target.abs().max(1.0) {
                return Err(Error::FluxQuantization { product, flux_quanta });
            }
        }
        Ok(())
    }
}

pub fn dft_matrix(n: usize) -> Mat<C64> {
    let s = 1.0 / (n as f64).sqrt();
    Mat::from_fn(n, n, |k, j| {
        let ph = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
        c(s * ph.cos(), s * ph.sin())
    })
}

/// Forward hop data: for each transverse site and axis, the neighbour index
/// and link factor `e^{−i∫a·dl}` (absent across a Dirichlet edge).
#[derive(Clone, Debug)]
pub struct Links {
    pub forward: [Vec<Option<(usize, C64)>>; 2],
}

pub fn build_links(lattice: &LatticeSpec, gauge: &GaugeField) -> Result<Links> {
    lattice.validate()?;
    lattice.check_flux(gauge)?;
    let (n1, n2) = (lattice.points[0], lattice.points[1]);
    let periodic = matches!(lattice.boundary, Boundary::MagneticPeriodic { .. });
    let b0 = gauge.spec.constant_strength().unwrap_or(0.0);
    let mut fwd: [Vec<Option<(usize, C64)>>; 2] = [Vec::new(), Vec::new()];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let x = [lattice.coord(0, i1), lattice.coord(1, i2)];
            for axis in 0..2 {
                let mut y = x;
                y[axis] += lattice.h(axis);
                let (j1, j2) = if axis == 0 { (i1 + 1, i2) } else { (i1, i2 + 1) };
                let wraps = j1 == n1 || j2 == n2;
                if wraps && !periodic {
                    fwd[axis].push(None);
                    continue;
                }
                let mut theta = gauge.link_integral(x, y)?;
                if wraps {
                    // Magnetic translation matching at the seam.
                    theta += if axis == 0 {
                        -0.5 * b0 * lattice.extents[0] * x[1]
                    } else {
                        0.5 * b0 * lattice.extents[1] * x[0]
                    };
                }
                let idx = lattice.site_index(j1 % n1, j2 % n2);
                fwd[axis].push(Some((idx, c(theta.cos(), -theta.sin()))));
            }
        }
    }
    Ok(Links { forward: fwd })
}

fn hop_matrix(links: &Links, axis: usize) -> SparseMatrix {
    let f = &links.forward[axis];
    SparseMatrix::from_triplets(
        f.len(),
        f.iter().enumerate().filter_map(|(i, l)| l.map(|(j, u)| (i, j, u))).collect(),
    )
}

/// Covariant symmetric difference `Π_j = −i(T_j − T_j*)/(2h_j)` on the
/// transverse sites (scalar, one component per site).
pub fn build_pi(lattice: &LatticeSpec, gauge: &GaugeField, axis: usize) -> Result<OperatorMatrix> {
    if !(axis == 1 || axis == 2) {
        return Err(Error::InvalidArgument(format!("Π axis must be 1 or 2, got {axis}")));
    }
    let links = build_links(lattice, gauge)?;
    Ok(pi_from_links(lattice, &links, axis - 1))
}

fn pi_from_links(lattice: &LatticeSpec, links: &Links, ax: usize) -> OperatorMatrix {
    let t = hop_matrix(links, ax);
    let d = t.add_scaled(c(-1.0, 0.0), &t.adjoint()).scaled(c(0.0, -0.5 / lattice.h(ax)));
    OperatorMatrix::sparse(d, true, SpinorLayout::new(1, lattice.transverse_sites(), 1))
}

/// Wilson term `W = Σ_j (2 − T_j − T_j*)/(2h_j)`.
pub fn build_wilson(lattice: &LatticeSpec, gauge: &GaugeField) -> Result<SparseMatrix> {
    let links = build_links(lattice, gauge)?;
    Ok(wilson_from_links(lattice, &links))
}

fn wilson_from_links(lattice: &LatticeSpec, links: &Links) -> SparseMatrix {
    let n = lattice.transverse_sites();
    let mut w = SparseMatrix::zeros(n);
    for ax in 0..2 {
        let t = hop_matrix(links, ax);
        let lap = SparseMatrix::identity(n)
            .scaled(c(2.0, 0.0))
            .add_scaled(c(-1.0, 0.0), &t)
            .add_scaled(c(-1.0, 0.0), &t.adjoint());
        w = w.add_scaled(c(0.5 / lattice.h(ax), 0.0), &lap);
    }
    w
}

/// Plaquette products `T₁(x)T₂(x+e₁)T₁(x+e₂)*T₂(x)*`, one per site with a
/// complete plaquette.
pub fn plaquette_phases(lattice: &LatticeSpec, gauge: &GaugeField) -> Result<Vec<C64>> {
    let links = build_links(lattice, gauge)?;
    let mut out = Vec::new();
    for s in 0..lattice.transverse_sites() {
        let Some((s1, u1)) = links.forward[0][s] else { continue };
        let Some((s12, u2b)) = links.forward[1][s1] else { continue };
        let Some((s2, u2)) = links.forward[1][s] else { continue };
        let Some((s21, u1b)) = links.forward[0][s2] else { continue };
        debug_assert_eq!(s12, s21);
        out.push(u1 * u2b * u1b.conj() * u2.conj());
    }
    Ok(out)
}

fn spinor_kron<const N: usize>(site: &SparseMatrix, m: &[[C64; N]; N]) -> SparseMatrix {
    let t: Vec<_> = (0..N)
        .flat_map(|i| (0..N).filter_map(move |j| (m[i][j] != ZERO).then_some((i, j, m[i][j]))))
        .collect();
    SparseMatrix::kron(site, &SparseMatrix::from_triplets(N, t))
}

fn check_mass(m: f64, wilson_r: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("mass must be positive, got {m}")));
    }
    if !(wilson_r >= 0.0 && wilson_r.is_finite()) {
        return Err(Error::Config(format!("wilson_r must be non-negative, got {wilson_r}")));
    }
    Ok(())
}

/// Internal 2-spinor operator `H⁰ = σ₁Π₁ + σ₂Π₂ + σ₃(m + rW)`.
pub fn build_internal_h(lattice: &LatticeSpec, gauge: &GaugeField, m: f64, wilson_r: f64) -> Result<OperatorMatrix> {
    check_mass(m, wilson_r)?;
    let links = build_links(lattice, gauge)?;
    let [s1, s2, s3]: [Mat2; 3] = pauli();
    let n = lattice.transverse_sites();
    let mass = mass_operator(lattice, &links, m, wilson_r);
    let op = spinor_kron(pi_from_links(lattice, &links, 0).as_sparse().unwrap(), &s1)
        .add_scaled(ONE, &spinor_kron(pi_from_links(lattice, &links, 1).as_sparse().unwrap(), &s2))
        .add_scaled(ONE, &spinor_kron(&mass, &s3));
    Ok(OperatorMatrix::sparse(op, true, SpinorLayout::new(1, n, 2)))
}

fn mass_operator(lattice: &LatticeSpec, links: &Links, m: f64, wilson_r: f64) -> SparseMatrix {
    let n = lattice.transverse_sites();
    SparseMatrix::identity(n).scaled(c(m, 0.0)).add_scaled(c(wilson_r, 0.0), &wilson_from_links(lattice, links))
}

/// Zero-momentum fiber `H₀(0) = α₁Π₁ + α₂Π₂ + β(m + rW)`.
pub fn build_h00(lattice: &LatticeSpec, gauge: &GaugeField, m: f64, wilson_r: f64) -> Result<OperatorMatrix> {
    check_mass(m, wilson_r)?;
    let links = build_links(lattice, gauge)?;
    let d = dirac_matrices();
    let n = lattice.transverse_sites();
    let mass = mass_operator(lattice, &links, m, wilson_r);
    let op = spinor_kron(pi_from_links(lattice, &links, 0).as_sparse().unwrap(), &d.alpha1)
        .add_scaled(ONE, &spinor_kron(pi_from_links(lattice, &links, 1).as_sparse().unwrap(), &d.alpha2))
        .add_scaled(ONE, &spinor_kron(&mass, &d.beta));
    Ok(OperatorMatrix::sparse(op, true, SpinorLayout::new(1, n, 4)))
}

/// `1 ⊗ α₃` on one transverse slice.
pub fn alpha3_slice(transverse_sites: usize) -> SparseMatrix {
    spinor_kron(&SparseMatrix::identity(transverse_sites), &dirac_matrices().alpha3)
}

/// `H₀(ξ) = H₀(0) + α₃ξ`.
pub fn build_fiber_h(h00: &OperatorMatrix, xi: f64) -> Result<OperatorMatrix> {
    if h00.layout.spinor != 4 || h00.layout.x3_sites != 1 {
        return Err(Error::InvalidArgument("fiber operator needs a single-slice 4-spinor H₀(0)".into()));
    }
    if xi == 0.0 {
        return Ok(h00.clone());
    }
    let a3 = alpha3_slice(h00.layout.transverse_sites);
    Ok(OperatorMatrix::sparse(h00.to_sparse().add_scaled(c(xi, 0.0), &a3), h00.hermitian, h00.layout))
}

fn require_3d(lattice: &LatticeSpec) -> Result<()> {
    lattice.validate()?;
    if lattice.dims() != 3 {
        return Err(Error::InvalidArgument("a 3-D lattice is required".into()));
    }
    Ok(())
}

/// `N₃×N₃` matrix `D* diag(f(ξ_k)) D`.
pub fn fourier_multiplier(lattice: &LatticeSpec, f: impl Fn(f64) -> f64) -> Mat<C64> {
    let d = lattice.dft_matrix();
    let xis = lattice.xi_modes();
    let n = xis.len();
    let fd = Mat::from_fn(n, n, |k, j| d[(k, j)] * f(xis[k]));
    crate::linalg::adjoint_matmul(d.as_ref(), fd.as_ref())
}

fn dense_to_sparse_1d(m: &Mat<C64>) -> SparseMatrix {
    SparseMatrix::from_dense(m.as_ref())
}

/// `P₃` on the ring, `D* diag(ξ_k) D`.
pub fn p3_matrix(lattice: &LatticeSpec) -> Mat<C64> {
    fourier_multiplier(lattice, |xi| xi)
}

pub const DEFAULT_NONZERO_BUDGET: usize = 50_000_000;

/// `H₀ = 1 ⊗ H₀(0) + P₃ ⊗ (1 ⊗ α₃)` in the `x3`-major layout.
pub fn build_h0_3d(lattice: &LatticeSpec, h00: &OperatorMatrix, nonzero_budget: usize) -> Result<OperatorMatrix> {
    require_3d(lattice)?;
    let nt = lattice.transverse_sites();
    if h00.layout != SpinorLayout::new(1, nt, 4) {
        return Err(Error::InvalidArgument("H₀(0) does not match the lattice".into()));
    }
    let n3 = lattice.n3();
    let a3 = alpha3_slice(nt);
    let estimate = n3 * h00.nnz() + n3 * n3 * a3.nnz();
    if estimate > nonzero_budget {
        return Err(Error::NonzeroBudgetExceeded { nnz: estimate, budget: nonzero_budget });
    }
    let p3 = dense_to_sparse_1d(&p3_matrix(lattice));
    let op = SparseMatrix::kron(&SparseMatrix::identity(n3), &h00.to_sparse()).add_scaled(ONE, &SparseMatrix::kron(&p3, &a3));
    Ok(OperatorMatrix::sparse(op, true, lattice.layout()))
}

/// `F(P₃) ⊗ 1`
pub fn build_f_of_p3(lattice: &LatticeSpec, f: &SmoothStepF) -> Result<OperatorMatrix> {
    require_3d(lattice)?;
    let fm = dense_to_sparse_1d(&fourier_multiplier(lattice, |xi| f.eval(xi)));
    let b = lattice.layout().block();
    Ok(OperatorMatrix::sparse(SparseMatrix::kron(&fm, &SparseMatrix::identity(b)), true, lattice.layout()))
}

/// `A = ½(Q₃F(P₃) + F(P₃)Q₃) ⊗ 1` with `Q₃` the centred sawtooth.
pub fn build_a(lattice: &LatticeSpec, f: &SmoothStepF) -> Result<OperatorMatrix> {
    require_3d(lattice)?;
    let a1 = a_matrix_1d(lattice, f);
    let b = lattice.layout().block();
    Ok(OperatorMatrix::sparse(
        SparseMatrix::kron(&dense_to_sparse_1d(&a1), &SparseMatrix::identity(b)),
        true,
        lattice.layout(),
    ))
}

pub fn a_matrix_1d(lattice: &LatticeSpec, f: &SmoothStepF) -> Mat<C64> {
    let fm = fourier_multiplier(lattice, |xi| f.eval(xi));
    let q = lattice.x3_coords();
    let n = q.len();
    Mat::from_fn(n, n, |i, j| fm[(i, j)] * (q[i] + q[j]) * 0.5)
}

/// `T = F(P₃) ⊗ (1 ⊗ α₃)`
pub fn build_t(lattice: &LatticeSpec, f: &SmoothStepF) -> Result<OperatorMatrix> {
    require_3d(lattice)?;
    let fm = dense_to_sparse_1d(&fourier_multiplier(lattice, |xi| f.eval(xi)));
    Ok(OperatorMatrix::sparse(
        SparseMatrix::kron(&fm, &alpha3_slice(lattice.transverse_sites())),
        true,
        lattice.layout(),
    ))
}

/// Gap threshold below which `|H₀|⁻¹` is refused.
pub const MIN_SPECTRAL_GAP: f64 = 1e-6;

/// `T` and `R = F(P₃)P₃|H₀|⁻¹` through a dense eigendecomposition of `H₀`.
pub fn build_t_r(
    lattice: &LatticeSpec,
    h0: &OperatorMatrix,
    f: &SmoothStepF,
    dense_cap: usize,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    require_3d(lattice)?;
    if h0.dim() > dense_cap {
        return Err(Error::DenseCapExceeded { dim: h0.dim(), cap: dense_cap });
    }
    let (vals, vecs) = hermitian_eigen(h0.to_dense().as_ref())?;
    let mu0 = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if mu0 < MIN_SPECTRAL_GAP {
        return Err(Error::SpectralGapTooSmall { mu0, threshold: MIN_SPECTRAL_GAP });
    }
    let n = h0.dim();
    let scaled = Mat::from_fn(n, n, |i, j| vecs[(i, j)] / vals[j].abs());
    let abs_inv = &scaled * vecs.adjoint();
    let fp = fourier_multiplier(lattice, |xi| f.eval(xi) * xi);
    let b = lattice.layout().block();
    let fp_full = SparseMatrix::kron(&dense_to_sparse_1d(&fp), &SparseMatrix::identity(b));
    let r = OperatorMatrix::sparse(fp_full, true, lattice.layout()).apply_mat(abs_inv.as_ref());
    let r = Mat::from_fn(n, n, |i, j| 0.5 * (r[(i, j)] + r[(j, i)].conj()));
    Ok((build_t(lattice, f)?, OperatorMatrix::dense(r, true, lattice.layout())))
}

/// Per-fiber eigendecomposition of `H₀`: after the DFT along `x3` each
/// block is `H₀(ξ_k)`, diagonalised densely.  Gives exact functions of
/// `H₀` at sizes far beyond the dense cap.
#[derive(Clone, Debug)]
pub struct FiberDecomposition {
    pub layout: SpinorLayout,
    pub xis: Vec<f64>,
    pub dft: Mat<C64>,
    pub values: Vec<Vec<f64>>,
    pub vectors: Vec<Mat<C64>>,
}

impl FiberDecomposition {
    pub fn new(lattice: &LatticeSpec, h00: &OperatorMatrix) -> Result<Self> {
        require_3d(lattice)?;
        let xis = lattice.xi_modes();
        let a3 = alpha3_slice(lattice.transverse_sites());
        let base = h00.to_sparse();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(xis.len());
        let mut vectors: Vec<Mat<C64>> = Vec::with_capacity(xis.len());
        // Fibers with equal ξ share a decomposition.
        let mut cache: Vec<(f64, usize)> = Vec::new();
        for &xi in &xis {
            if let Some(&(_, k)) = cache.iter().find(|(x, _)| *x == xi) {
                values.push(values[k].clone());
                vectors.push(vectors[k].clone());
                continue;
            }
            let block = base.add_scaled(c(xi, 0.0), &a3).to_dense();
            let (v, u) = hermitian_eigen(block.as_ref())?;
            cache.push((xi, values.len()));
            values.push(v);
            vectors.push(u);
        }
        Ok(FiberDecomposition { layout: lattice.layout(), xis, dft: lattice.dft_matrix(), values, vectors })
    }

    pub fn mu0(&self) -> f64 {
        self.values.iter().flatten().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// All eigenvalues of `H₀`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `g(H₀, P₃)` for a function of the fiber eigenvalue and momentum.
    pub fn function(&self, g: impl Fn(f64, f64) -> f64) -> FiberFunction {
        let blocks = self
            .vectors
            .iter()
            .zip(&self.values)
            .zip(&self.xis)
            .map(|((u, vals), &xi)| {
                let n = u.nrows();
                let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * g(vals[j], xi));
                &scaled * u.adjoint()
            })
            .collect();
        FiberFunction { dft: self.dft.clone(), blocks }
    }

    pub fn operator(&self, g: impl Fn(f64, f64) -> f64) -> OperatorMatrix {
        OperatorMatrix::fiber(self.function(g), true, self.layout)
    }

    pub fn inverse(&self) -> Result<OperatorMatrix> {
        self.check_gap()?;
        Ok(self.operator(|e, _| 1.0 / e))
    }

    pub fn abs_inverse(&self) -> Result<OperatorMatrix> {
        self.check_gap()?;
        Ok(self.operator(|e, _| 1.0 / e.abs()))
    }

    /// `R = F(P₃)P₃|H₀|⁻¹`
    pub fn r_operator(&self, f: &SmoothStepF) -> Result<OperatorMatrix> {
        self.check_gap()?;
        Ok(self.operator(|e, xi| f.eval(xi) * xi / e.abs()))
    }

    fn check_gap(&self) -> Result<()> {
        let mu0 = self.mu0();
        if mu0 < MIN_SPECTRAL_GAP {
            return Err(Error::SpectralGapTooSmall { mu0, threshold: MIN_SPECTRAL_GAP });
        }
        Ok(())
    }

    /// Full-space eigenvector for fiber `k`, local eigenvector `j`.
    pub fn eigenvector(&self, k: usize, j: usize) -> Vec<C64> {
        let b = self.layout.block();
        let n3 = self.xis.len();
        let mut out = vec![ZERO; n3 * b];
        for i3 in 0..n3 {
            let ph = self.dft[(k, i3)].conj();
            for l in 0..b {
                out[i3 * b + l] = ph * self.vectors[k][(l, j)];
            }
        }
        out
    }
}

/// Scalar test function for the commutator identities, with its derivative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    /// `tanh(x/scale)`
    Tanh { scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Tanh { scale } => (x / scale).tanh(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Tanh { scale } => {
                let t = (x / scale).tanh();
                (1.0 - t * t) / scale
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub n3: usize,
    /// `H₀⁻¹g(Q₃) − g(Q₃)H₀⁻¹ − iH₀⁻¹α₃g′(Q₃)H₀⁻¹`
    pub inverse_commutator_g: f64,
    /// `i[H₀, A] − α₃F(P₃)`
    pub commutator_h0_a: f64,
    /// `i[H₀⁻¹, A] + H₀⁻¹α₃F(P₃)H₀⁻¹`
    pub commutator_inverse_a: f64,
}

fn diag_apply(lattice: &LatticeSpec, d: impl Fn(f64) -> f64, x: &[C64]) -> Vec<C64> {
    let b = lattice.layout().block();
    let q = lattice.x3_coords();
    x.iter().enumerate().map(|(i, v)| v * d(q[i / b])).collect()
}

/// Residuals of the three commutator identities, max over the test set of
/// `‖(LHS − RHS)ψ‖/‖ψ‖`.
pub fn commutator_residuals(
    lattice: &LatticeSpec,
    fibers: &FiberDecomposition,
    a: &OperatorMatrix,
    f: &SmoothStepF,
    g: TestFunction,
    test_set: &[Vec<C64>],
) -> Result<CommutatorReport> {
    use crate::linalg::{norm, sub};
    require_3d(lattice)?;
    let hinv = fibers.inverse()?;
    let h0 = fibers.operator(|e, _| e);
    let t = build_t(lattice, f)?;
    let a3 = OperatorMatrix::sparse(
        SparseMatrix::kron(&SparseMatrix::identity(lattice.n3()), &alpha3_slice(lattice.transverse_sites())),
        true,
        lattice.layout(),
    );
    let mut rep = CommutatorReport { n3: lattice.n3(), inverse_commutator_g: 0.0, commutator_h0_a: 0.0, commutator_inverse_a: 0.0 };
    for psi in test_set {
        let np = norm(psi);
        // Commutator of H₀⁻¹ with g(Q₃).
        let lhs = sub(&hinv.apply_vec(&diag_apply(lattice, |x| g.eval(x), psi)), &diag_apply(lattice, |x| g.eval(x), &hinv.apply_vec(psi)));
        let mut rhs = hinv.apply_vec(&a3.apply_vec(&diag_apply(lattice, |x| g.derivative(x), &hinv.apply_vec(psi))));
        crate::linalg::scale_in_place(I, &mut rhs);
        rep.inverse_commutator_g = rep.inverse_commutator_g.max(norm(&sub(&lhs, &rhs)) / np);

        let comm = sub(&h0.apply_vec(&a.apply_vec(psi)), &a.apply_vec(&h0.apply_vec(psi)));
        let mut comm = comm;
        crate::linalg::scale_in_place(I, &mut comm);
        rep.commutator_h0_a = rep.commutator_h0_a.max(norm(&sub(&comm, &t.apply_vec(psi))) / np);

        let mut ci = sub(&hinv.apply_vec(&a.apply_vec(psi)), &a.apply_vec(&hinv.apply_vec(psi)));
        crate::linalg::scale_in_place(I, &mut ci);
        let target = hinv.apply_vec(&t.apply_vec(&hinv.apply_vec(psi)));
        let resid: Vec<C64> = ci.iter().zip(&target).map(|(x, y)| x + y).collect();
        rep.commutator_inverse_a = rep.commutator_inverse_a.max(norm(&resid) / np);
    }
    Ok(rep)
}

/// Fraction of `|ψ|²` on transverse sites within `depth` sites of a
/// Dirichlet edge (0 for magnetic-periodic lattices).
pub fn edge_weight(lattice: &LatticeSpec, psi: &[C64], spinor: usize) -> f64 {
    if matches!(lattice.boundary, Boundary::MagneticPeriodic { .. }) {
        return 0.0;
    }
    let depth = 3;
    let (n1, n2) = (lattice.points[0], lattice.points[1]);
    let nt = n1 * n2;
    let near = |t: usize| {
        let (i1, i2) = (t / n2, t % n2);
        i1 < depth || i2 < depth || i1 + depth >= n1 || i2 + depth >= n2
    };
    let (mut e, mut total) = (0.0, 0.0);
    for (i, v) in psi.iter().enumerate() {
        let t = (i / spinor) % nt;
        let w = v.norm_sqr();
        total += w;
        if near(t) {
            e += w;
        }
    }
    if total > 0.0 {
        e / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn zero_field() -> GaugeField {
        GaugeField::new(FieldSpec::Constant { b0: 0.0 }).unwrap()
    }

    #[test]
    fn free_plane_wave_is_pi_eigenvector() {
        let lat = LatticeSpec {
            extents: vec![8.0, 8.0],
            points: vec![16, 16],
            boundary: Boundary::MagneticPeriodic { flux_quanta: 0 },
            spinor_components: 2,
        };
        let pi1 = build_pi(&lat, &zero_field(), 1).unwrap();
        let k = 2.0 * PI * 3.0 / 8.0;
        let psi: Vec<C64> = lat.transverse_coords().iter().map(|x| c((k * x[0]).cos(), (k * x[0]).sin())).collect();
        let out = pi1.apply_vec(&psi);
        let lam = (k * lat.h(0)).sin() / lat.h(0);
        for (o, p) in out.iter().zip(&psi) {
            assert!((o - p * lam).norm() < 1e-12);
        }
        assert_eq!(pi1.hermiticity_residual(), 0.0);
    }

    #[test]
    fn plaquettes_carry_uniform_flux() {
        let lat = LatticeSpec::magnetic_square(10, 3, 1.0);
        let g = GaugeField::new(FieldSpec::Constant { b0: 1.0 }).unwrap();
        let ph = plaquette_phases(&lat, &g).unwrap();
        assert_eq!(ph.len(), 100);
        let phi = lat.h(0) * lat.h(1);
        let want = c(phi.cos(), -phi.sin());
        for p in ph {
            assert!((p - want).norm() < 1e-12, "{p} vs {want}");
        }
    }

    #[test]
    fn flux_quantization_is_enforced() {
        let mut lat = LatticeSpec::magnetic_square(8, 2, 1.0);
        lat.extents[0] *= 1.01;
        let g = GaugeField::new(FieldSpec::Constant { b0: 1.0 }).unwrap();
        assert!(matches!(build_pi(&lat, &g, 1), Err(Error::FluxQuantization { .. })));
    }

    #[test]
    fn xi_modes_follow_fft_order() {
        let lat = LatticeSpec::magnetic_square(4, 1, 1.0).with_x3(4, 2.0 * PI);
        assert_eq!(lat.xi_modes(), vec![0.0, 1.0, -2.0, -1.0]);
    }

    #[test]
    fn fourier_multiplier_of_identity() {
        let lat = LatticeSpec::magnetic_square(4, 1, 1.0).with_x3(6, 3.0);
        let m = fourier_multiplier(&lat, |_| 1.0);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }
}
