//! Matrix-valued perturbations `V = V_reg + χ(V_loc + V_c)` with Coulomb
//! centres, their decay classification, and the perturbed operator.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::{c, fit_power_law, hermitian_eigenvalues, OperatorMatrix, SparseMatrix, ZERO};
use crate::mourre::SmoothStepF;
use crate::spinor::{adjoint, dirac_matrices, identity, max_abs_diff, Mat4};
use crate::C64;

/// Scalar radial/axial profiles; `⟨t⟩ = √(1 + t²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// `strength · e^{−decay·|x|}`
    Yukawa { strength: f64, decay: f64 },
    /// `strength · ⟨x₃⟩^{−p}`
    X3Power { strength: f64, p: f64 },
    /// `strength · ⟨|x|⟩^{−p}`
    RadialPower { strength: f64, p: f64 },
    /// `strength · e^{−|x|²/(2w²)}`
    Gaussian { strength: f64, width: f64 },
    /// Samples on a uniform grid, trilinear in between and 0 outside.
    Tabulated { origin: [f64; 3], spacing: [f64; 3], shape: [usize; 3], values: Vec<f64> },
}

fn japanese(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

impl Profile {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        match self {
            Profile::Constant { value } => *value,
            Profile::Yukawa { strength, decay } => strength * (-decay * r).exp(),
            Profile::X3Power { strength, p } => strength * japanese(x[2]).powf(-p),
            Profile::RadialPower { strength, p } => strength * japanese(r).powf(-p),
            Profile::Gaussian { strength, width } => strength * (-r * r / (2.0 * width * width)).exp(),
            Profile::Tabulated { origin, spacing, shape, values } => {
                let mut idx = [0usize; 3];
                let mut frac = [0.0; 3];
                for a in 0..3 {
                    let u = (x[a] - origin[a]) / spacing[a];
                    if !(u >= 0.0 && u <= (shape[a] - 1) as f64) {
                        return 0.0;
                    }
                    let i = (u.floor() as usize).min(shape[a].saturating_sub(2));
                    idx[a] = i;
                    frac[a] = u - i as f64;
                }
                let at = |i: usize, j: usize, k: usize| values[(i * shape[1] + j) * shape[2] + k];
                let mut v = 0.0;
                for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
                    for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                        for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                            let w = wi * wj * wk;
                            if w != 0.0 {
                                v += w * at(idx[0] + di, idx[1] + dj, idx[2] + dk);
                            }
                        }
                    }
                }
                v
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Profile::Tabulated { spacing, shape, values, .. } = self {
            if shape.iter().any(|&n| n < 2) || spacing.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::Config("tabulated profile needs >= 2 points and positive spacing per axis".into()));
            }
            if values.len() != shape.iter().product::<usize>() {
                return Err(Error::Config("tabulated profile values do not fill the grid".into()));
            }
        }
        Ok(())
    }
}

/// Constant 4×4 Hermitian matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Named {
        name: NamedMatrix,
        #[serde(default = "one")]
        scale: f64,
    },
    Explicit {
        re: [[f64; 4]; 4],
        im: [[f64; 4]; 4],
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMatrix {
    Identity,
    Beta,
    Alpha1,
    Alpha2,
    Alpha3,
}

impl MatrixSpec {
    pub fn scaled_identity(s: f64) -> Self {
        MatrixSpec::Named { name: NamedMatrix::Identity, scale: s }
    }

    pub fn matrix(&self) -> Mat4 {
        match self {
            MatrixSpec::Named { name, scale } => {
                let d = dirac_matrices();
                let m = match name {
                    NamedMatrix::Identity => identity::<4>(),
                    NamedMatrix::Beta => d.beta,
                    NamedMatrix::Alpha1 => d.alpha1,
                    NamedMatrix::Alpha2 => d.alpha2,
                    NamedMatrix::Alpha3 => d.alpha3,
                };
                m.map(|row| row.map(|v| v * *scale))
            }
            MatrixSpec::Explicit { re, im } => {
                let mut m = [[ZERO; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        m[i][j] = c(re[i][j], im[i][j]);
                    }
                }
                m
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTerm {
    pub profile: Profile,
    pub matrix: MatrixSpec,
}

/// `χ(x) = 1 − F((|x − centre| − r_inner)/(r_outer − r_inner))`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoff {
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default)]
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Cutoff { center: [0.0; 3], r_inner: 0.0, r_outer: 2.0 }
    }
}

impl Cutoff {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let d = dist(x, self.center);
        1.0 - SmoothStepF::BumpIntegral.eval((d - self.r_inner) / (self.r_outer - self.r_inner))
    }
}

fn default_coulomb_matrix() -> MatrixSpec {
    MatrixSpec::scaled_identity(-1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub regular: Vec<MatrixTerm>,
    #[serde(default)]
    pub coulomb_centers: Vec<[f64; 3]>,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_coulomb_matrix")]
    pub coulomb_matrix: MatrixSpec,
    #[serde(default)]
    pub cutoff: Cutoff,
    #[serde(default)]
    pub vloc: Vec<MatrixTerm>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            regular: Vec::new(),
            coulomb_centers: Vec::new(),
            nu: 0.0,
            coulomb_matrix: default_coulomb_matrix(),
            cutoff: Cutoff::default(),
            vloc: Vec::new(),
        }
    }
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn hermiticity(m: &Mat4) -> f64 {
    max_abs_diff(m, &adjoint(m))
}

fn add_scaled(acc: &mut Mat4, m: &Mat4, s: f64) {
    for i in 0..4 {
        for j in 0..4 {
            acc[i][j] += m[i][j] * s;
        }
    }
}

impl PotentialSpec {
    /// Structural checks; `ν ≥ 1` is a hypothesis violation rather than a
    /// configuration error.
    pub fn validate(&self) -> Result<()> {
        for t in self.regular.iter().chain(&self.vloc) {
            t.profile.validate()?;
            let m = t.matrix.matrix();
            if hermiticity(&m) > 1e-14 {
                return Err(Error::Config("potential matrices must be Hermitian".into()));
            }
        }
        if hermiticity(&self.coulomb_matrix.matrix()) > 1e-14 {
            return Err(Error::Config("coulomb_matrix must be Hermitian".into()));
        }
        if !(self.cutoff.r_outer > self.cutoff.r_inner && self.cutoff.r_inner >= 0.0) {
            return Err(Error::Config("cutoff needs 0 <= r_inner < r_outer".into()));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::Config(format!("nu must be a non-negative number, got {}", self.nu)));
        }
        if self.nu >= 1.0 {
            return Err(Error::Hypothesis(format!("coupling nu = {} violates nu < 1", self.nu)));
        }
        Ok(())
    }

    pub fn regular_part(&self, x: [f64; 3]) -> Mat4 {
        let mut m = [[ZERO; 4]; 4];
        for t in &self.regular {
            add_scaled(&mut m, &t.matrix.matrix(), t.profile.eval(x));
        }
        m
    }

    /// Coulomb part `Σ_a M ν/|x − a|` (without the cutoff).
    pub fn coulomb_part(&self, x: [f64; 3]) -> Result<Mat4> {
        let mut m = [[ZERO; 4]; 4];
        let cm = self.coulomb_matrix.matrix();
        for &a in &self.coulomb_centers {
            let d = dist(x, a);
            if d == 0.0 {
                return Err(Error::CenterCollision(a));
            }
            add_scaled(&mut m, &cm, self.nu / d);
        }
        Ok(m)
    }

    pub fn singular_part(&self, x: [f64; 3]) -> Result<Mat4> {
        let chi = self.cutoff.eval(x);
        let mut m = self.coulomb_part(x)?;
        for t in &self.vloc {
            add_scaled(&mut m, &t.matrix.matrix(), t.profile.eval(x));
        }
        Ok(m.map(|row| row.map(|v| v * chi)))
    }

    pub fn has_singular_part(&self) -> bool {
        !self.vloc.is_empty() || (!self.coulomb_centers.is_empty() && self.nu != 0.0)
    }
}

/// `V(x)`; fails at a Coulomb centre.
pub fn sample_potential(spec: &PotentialSpec, x: [f64; 3]) -> Result<Mat4> {
    let mut m = spec.regular_part(x);
    let s = spec.singular_part(x)?;
    add_scaled(&mut m, &s, 1.0);
    Ok(m)
}

pub fn spectral_norm4(m: &Mat4) -> f64 {
    let d = Mat::from_fn(4, 4, |i, j| m[i][j]);
    hermitian_eigenvalues(d.as_ref()).map(|v| v.iter().fold(0.0f64, |a, b| a.max(b.abs()))).unwrap_or(f64::NAN)
}

/// Largest `‖V_c(x)‖ − Σ_a ν/|x − a|` over the samples.
pub fn coulomb_bound_verify(spec: &PotentialSpec, samples: &[[f64; 3]]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &x in samples {
        let vc = spec.coulomb_part(x)?;
        let bound: f64 = spec.coulomb_centers.iter().map(|&a| spec.nu / dist(x, a)).sum();
        worst = worst.max(spectral_norm4(&vc) - bound);
    }
    Ok(if samples.is_empty() { 0.0 } else { worst })
}

/// Cut-off `ϑ(t) = F(2t − 1)`: 0 on `[0, ½]`, 1 on `[1, ∞)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theta {
    pub f: SmoothStepF,
}

impl Theta {
    pub fn eval(&self, t: f64) -> f64 {
        self.f.eval(2.0 * t - 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayVerdicts {
    pub small_at_infinity: bool,
    pub short_range: bool,
    pub long_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    /// `(r, sup_x ϑ(|x|/r)‖V_reg(x)‖)`
    pub shell_sup_norms: Vec<(f64, f64)>,
    /// `(r, sup_x ϑ(|x₃|/r)‖V_reg(x)‖)`
    pub x3_sup_norms: Vec<(f64, f64)>,
    /// `(R, ∫₁^R dr sup ϑ(|x₃|/r)‖V_reg‖)`
    pub partial_short_range_integrals: Vec<(f64, f64)>,
    /// `(R, ∫₁^R dr/r sup ϑ(|x₃|/r)⟨x₃⟩‖∂₃V_reg‖)`
    pub long_range_integrals: Vec<(f64, f64)>,
    pub fitted_exponent: f64,
    pub shell_exponent: f64,
    pub long_range_exponent: f64,
    pub verdicts: DecayVerdicts,
}

/// `n` quasi-uniform unit vectors (Fibonacci sphere).
pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

const ANGULAR: usize = 64;
const RADIAL: usize = 32;

fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn trapezoid_cumulative(radii: &[f64], vals: &[f64], lower: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (&r, &v) in radii.iter().zip(vals) {
        if let Some((pr, pv)) = prev {
            acc += 0.5 * (r - pr) * (v + pv);
        } else if r > lower {
            acc += (r - lower) * v;
        }
        prev = Some((r, v));
        out.push((r, acc));
    }
    out
}

fn tail_fit(radii: &[f64], vals: &[f64]) -> Option<(f64, f64)> {
    let from = radii.len() - radii.len() / 3 - 1;
    let p = fit_power_law(&radii[from..], &vals[from..])?;
    let r = radii[radii.len() - 1];
    let v = vals[vals.len() - 1];
    Some((p, v / r.powf(p)))
}

/// Numerical decay classification of the regular part,
/// from sampled sup-norms (an under-estimate of the true sups).
pub fn classify_decay(spec: &PotentialSpec, radii: &[f64], theta: &Theta) -> Result<DecayReport> {
    if radii.len() < 6 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 1.0 {
        return Err(Error::InvalidArgument("classify_decay needs >= 6 increasing radii, all >= 1".into()));
    }
    let dirs = fibonacci_directions(ANGULAR);
    let norm_at = |x: [f64; 3]| spectral_norm4(&spec.regular_part(x));
    let mut shell = Vec::new();
    let mut x3_prof = Vec::new();
    let mut lr_prof = Vec::new();
    // Transverse offsets for the slab sups.
    let transverse: Vec<[f64; 2]> = std::iter::once([0.0, 0.0])
        .chain((0..8).flat_map(|k| {
            let a = std::f64::consts::PI * k as f64 / 4.0;
            [0.5, 2.0, 8.0].map(|s| [s * a.cos(), s * a.sin()])
        }))
        .collect();
    for &r in radii {
        let samples = geometric(0.5 * r, 16.0 * r, RADIAL);
        let mut s = 0.0f64;
        for &rho in &samples {
            let w = theta.eval(rho / r);
            if w == 0.0 {
                continue;
            }
            for d in &dirs {
                s = s.max(w * norm_at([rho * d[0], rho * d[1], rho * d[2]]));
            }
        }
        shell.push(s);
        let (mut sx, mut sl) = (0.0f64, 0.0f64);
        for &z0 in &samples {
            let w = theta.eval(z0 / r);
            if w == 0.0 {
                continue;
            }
            for z in [z0, -z0] {
                for t in &transverse {
                    let x = [t[0] * r, t[1] * r, z];
                    sx = sx.max(w * norm_at(x));
                    let dz = 1e-4 * japanese(z);
                    let mut dv = spec.regular_part([x[0], x[1], z + dz]);
                    let vm = spec.regular_part([x[0], x[1], z - dz]);
                    add_scaled(&mut dv, &vm, -1.0);
                    sl = sl.max(w * japanese(z) * spectral_norm4(&dv) / (2.0 * dz));
                }
            }
        }
        x3_prof.push(sx);
        lr_prof.push(sl / r);
    }
    let partial = trapezoid_cumulative(radii, &x3_prof, 1.0);
    let long_int = trapezoid_cumulative(radii, &lr_prof, 1.0);
    let tiny = |v: &[f64]| v.last().copied().unwrap_or(0.0) < 1e-12;
    let (fitted_exponent, _) = tail_fit(radii, &x3_prof).unwrap_or((f64::NEG_INFINITY, 0.0));
    let (shell_exponent, _) = tail_fit(radii, &shell).unwrap_or((f64::NEG_INFINITY, 0.0));
    let (long_range_exponent, lr_coeff) = tail_fit(radii, &lr_prof).unwrap_or((f64::NEG_INFINITY, 0.0));
    let short_range = tiny(&x3_prof) || fitted_exponent < -1.0;
    let long_range = tiny(&lr_prof) || {
        let total = long_int.last().map_or(0.0, |p| p.1);
        let rmax = radii[radii.len() - 1];
        let tail = if long_range_exponent < -1.0 {
            lr_coeff * rmax.powf(long_range_exponent + 1.0) / (-long_range_exponent - 1.0)
        } else {
            f64::INFINITY
        };
        long_range_exponent < -1.0 && tail <= 0.1 * (total + tail)
    };
    let small_at_infinity = tiny(&shell) || shell_exponent < 0.0 && shell.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok(DecayReport {
        shell_sup_norms: radii.iter().copied().zip(shell).collect(),
        x3_sup_norms: radii.iter().copied().zip(x3_prof).collect(),
        partial_short_range_integrals: partial,
        long_range_integrals: long_int,
        fitted_exponent,
        shell_exponent,
        long_range_exponent,
        verdicts: DecayVerdicts { small_at_infinity, short_range, long_range },
    })
}

/// Default radius grid for [`classify_decay`]: 40 geometric points on `[1, 1000]`.
pub fn default_radii() -> Vec<f64> {
    geometric(1.0, 1000.0, 40)
}

/// Moves a point to the nearest cell centre `(coord + h/2)` of the lattice.
pub fn snap_to_cell_center(lattice: &LatticeSpec, a: [f64; 3]) -> [f64; 3] {
    let mut out = a;
    for (axis, o) in out.iter_mut().enumerate() {
        let h = lattice.h(axis);
        let x0 = lattice.coord(axis, 0) + 0.5 * h;
        *o = x0 + ((a[axis] - x0) / h).round() * h;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationInfo {
    pub centers: Vec<[f64; 3]>,
    pub max_sampled_norm: f64,
    pub coulomb_violation: f64,
}

/// Lattice sample points `(x₁, x₂, x₃)` in storage order.
pub fn lattice_points(lattice: &LatticeSpec) -> Vec<[f64; 3]> {
    let tc = lattice.transverse_coords();
    let mut pts = Vec::with_capacity(tc.len() * lattice.n3());
    for z in lattice.x3_coords() {
        for t in &tc {
            pts.push([t[0], t[1], z]);
        }
    }
    pts
}

/// Spec with the Coulomb centres snapped to cell centres of `lattice`.
pub fn snapped_spec(spec: &PotentialSpec, lattice: &LatticeSpec) -> PotentialSpec {
    let mut s = spec.clone();
    s.coulomb_centers = spec.coulomb_centers.iter().map(|&a| snap_to_cell_center(lattice, a)).collect();
    s
}

/// Site-diagonal operator `V` (4×4 block per site), after snapping the
/// centres to cell centres.
pub fn potential_operator(spec: &PotentialSpec, lattice: &LatticeSpec, include_regular: bool, include_singular: bool) -> Result<(SparseMatrix, PerturbationInfo)> {
    spec.validate()?;
    if lattice.dims() != 3 || lattice.spinor_components != 4 {
        return Err(Error::InvalidArgument("potentials act on a 3-D 4-spinor lattice".into()));
    }
    let s = snapped_spec(spec, lattice);
    let pts = lattice_points(lattice);
    let hmin = (0..3).map(|a| lattice.h(a)).fold(f64::INFINITY, f64::min);
    for &a in &s.coulomb_centers {
        if pts.iter().any(|&p| dist(p, a) < 1e-9 * hmin) {
            return Err(Error::CenterCollision(a));
        }
    }
    let violation = coulomb_bound_verify(&s, &pts)?;
    if violation > 1e-12 {
        return Err(Error::Hypothesis(format!("Coulomb bound violated by {violation:.3e} on the lattice")));
    }
    let mut t = Vec::new();
    let mut max_norm = 0.0f64;
    for (site, &x) in pts.iter().enumerate() {
        let mut v = [[ZERO; 4]; 4];
        if include_regular {
            add_scaled(&mut v, &s.regular_part(x), 1.0);
        }
        if include_singular {
            add_scaled(&mut v, &s.singular_part(x)?, 1.0);
        }
        if hermiticity(&v) > 1e-12 {
            return Err(Error::NotHermitian(hermiticity(&v)));
        }
        max_norm = max_norm.max(spectral_norm4(&v));
        for i in 0..4 {
            for j in 0..4 {
                if v[i][j] != ZERO {
                    t.push((site * 4 + i, site * 4 + j, v[i][j]));
                }
            }
        }
    }
    let info = PerturbationInfo { centers: s.coulomb_centers.clone(), max_sampled_norm: max_norm, coulomb_violation: violation };
    Ok((SparseMatrix::from_triplets(pts.len() * 4, t), info))
}

/// `H = H₀ + V` sampled on the lattice sites.
pub fn build_perturbed_h(h0: &OperatorMatrix, spec: &PotentialSpec, lattice: &LatticeSpec) -> Result<(OperatorMatrix, PerturbationInfo)> {
    let (v, info) = potential_operator(spec, lattice, true, true)?;
    if v.dim() != h0.dim() {
        return Err(Error::InvalidArgument("potential and H₀ dimensions differ".into()));
    }
    let h = h0.add_scaled(c(1.0, 0.0), &OperatorMatrix::sparse(v, true, h0.layout));
    let herm = h.hermiticity_residual();
    if herm > 1e-12 * h.norm_bound().max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    Ok((h, info))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationDecay {
    /// `(r, ‖ϑ(|Q|/r)((H_reg − z)⁻¹ − (H − z)⁻¹)‖)`
    pub table: Vec<(f64, f64)>,
    pub fitted_exponent: f64,
    pub short_range_like: bool,
    pub support_sites: usize,
}

/// Weighted norms of the resolvent difference of two operators that agree
/// outside a compact set of sites.  Uses
/// `R_reg − R = R_reg (H − H_reg) R = X ΔV Y` with `X = R_reg P_S`,
/// `Y = P_S* R`, so every norm reduces to a `k×k` problem.
pub fn resolvent_localization_decay(
    h_reg: &OperatorMatrix,
    h: &OperatorMatrix,
    lattice: &LatticeSpec,
    z: C64,
    radii: &[f64],
    theta: &Theta,
    dense_cap: usize,
) -> Result<LocalizationDecay> {
    let n = h.dim();
    if n > dense_cap {
        return Err(Error::DenseCapExceeded { dim: n, cap: dense_cap });
    }
    let diff = h.to_sparse().add_scaled(c(-1.0, 0.0), &h_reg.to_sparse());
    let mut support: Vec<usize> = diff.triplets().filter(|t| t.2.norm() > 0.0).flat_map(|t| [t.0, t.1]).collect();
    support.sort_unstable();
    support.dedup();
    let k = support.len();
    let pts = lattice_points(lattice);
    let spin = h.layout.spinor;
    if k == 0 {
        return Ok(LocalizationDecay { table: radii.iter().map(|&r| (r, 0.0)).collect(), fitted_exponent: f64::NEG_INFINITY, short_range_like: true, support_sites: 0 });
    }
    // Both operators are Hermitian, so |Im z| bounds the distance to their
    // spectra from below; only near-real shifts need the eigenvalues.
    if z.im.abs() < 1e-6 {
        for m in [h_reg, h] {
            let ev = hermitian_eigenvalues(m.to_dense().as_ref())?;
            let d = ev.iter().fold(f64::INFINITY, |a, e| a.min((c(*e, 0.0) - z).norm()));
            if d < 1e-6 {
                return Err(Error::NearSingularShift { re: z.re, im: z.im });
            }
        }
    }
    let ps = Mat::from_fn(n, k, |i, j| if support[j] == i { c(1.0, 0.0) } else { ZERO });
    let x = h_reg.shifted_dense(z).partial_piv_lu().solve(ps.as_ref());
    let yt = h.shifted_dense(z.conj()).partial_piv_lu().solve(ps.as_ref());
    // G = Y Y* = (Yᵗ)* Yᵗ
    let g = crate::linalg::adjoint_matmul(yt.as_ref(), yt.as_ref());
    let dv = Mat::from_fn(k, k, |i, j| diff.get(support[i], support[j]));
    let xdv = crate::linalg::matmul(x.as_ref(), dv.as_ref());
    let chol = g.llt(faer::Side::Lower).map_err(|e| Error::LanczosBreakdown(format!("Gram factorisation failed: {e:?}")))?;
    let l = chol.L().to_owned();
    let mut table = Vec::with_capacity(radii.len());
    for &r in radii {
        let w: Vec<f64> = (0..n).map(|i| theta.eval(dist(pts[i / spin], [0.0; 3]) / r)).collect();
        if w.iter().all(|&v| v == 0.0) {
            table.push((r, 0.0));
            continue;
        }
        let m = Mat::from_fn(n, k, |i, j| xdv[(i, j)] * w[i]);
        let ml = crate::linalg::matmul(m.as_ref(), l.as_ref());
        let gram = crate::linalg::adjoint_matmul(ml.as_ref(), ml.as_ref());
        let ev = hermitian_eigenvalues(gram.as_ref())?;
        table.push((r, ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()));
    }
    let (rs, vs): (Vec<f64>, Vec<f64>) = table.iter().filter(|p| p.1 > 0.0).copied().unzip();
    let fitted_exponent = fit_power_law(&rs, &vs).unwrap_or(f64::NEG_INFINITY);
    Ok(LocalizationDecay { table, fitted_exponent, short_range_like: fitted_exponent < -1.0, support_sites: k / spin.max(1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coulomb(nu: f64) -> PotentialSpec {
        PotentialSpec { coulomb_centers: vec![[0.0; 3]], nu, cutoff: Cutoff { center: [0.0; 3], r_inner: 3.0, r_outer: 4.0 }, ..Default::default() }
    }

    #[test]
    fn sample_examples() {
        let v = sample_potential(&coulomb(0.5), [0.0, 0.0, 2.0]).unwrap();
        assert_eq!(max_abs_diff(&v, &identity::<4>().map(|r| r.map(|x| x * -0.25))), 0.0);
        let far = sample_potential(&coulomb(0.5), [0.0, 0.0, 10.0]).unwrap();
        assert_eq!(far, [[ZERO; 4]; 4]);
        let yuk = PotentialSpec {
            regular: vec![MatrixTerm { profile: Profile::Yukawa { strength: 1.0, decay: 1.0 }, matrix: MatrixSpec::scaled_identity(1.0) }],
            ..Default::default()
        };
        let v = sample_potential(&yuk, [0.6, 0.0, 0.8]).unwrap();
        assert!((v[2][2].re - (-1f64).exp()).abs() < 1e-15);
        assert!(matches!(sample_potential(&coulomb(0.5), [0.0; 3]), Err(Error::CenterCollision(_))));
    }

    #[test]
    fn coulomb_bound_equality_and_violation() {
        let pts = [[1.0, 0.0, 0.0], [0.3, 0.4, -2.0]];
        assert!(coulomb_bound_verify(&coulomb(0.5), &pts).unwrap() <= 1e-15);
        let mut adv = coulomb(0.5);
        adv.coulomb_matrix = MatrixSpec::scaled_identity(-1.2);
        assert!(coulomb_bound_verify(&adv, &pts).unwrap() > 0.05);
    }

    #[test]
    fn nu_at_one_is_a_hypothesis_violation() {
        assert!(matches!(coulomb(1.05).validate(), Err(Error::Hypothesis(_))));
        assert!(coulomb(0.99).validate().is_ok());
    }

    #[test]
    fn fibonacci_directions_are_unit() {
        for d in fibonacci_directions(64) {
            assert!((d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tabulated_profile_is_trilinear() {
        let p = Profile::Tabulated { origin: [0.0; 3], spacing: [1.0; 3], shape: [2, 2, 2], values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0] };
        // f = 4x + 2y + z
        assert!((p.eval([0.5, 0.25, 0.75]) - (2.0 + 0.5 + 0.75)).abs() < 1e-15);
        assert_eq!(p.eval([1.5, 0.0, 0.0]), 0.0);
    }
}
