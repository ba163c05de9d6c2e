//! Dirac–Pauli matrices in the standard (Dirac) representation and the
//! splitting of the 4-spinor internal operator into two 2-spinor blocks.

use crate::error::{Error, Result};
use crate::linalg::{c, OperatorMatrix, SparseMatrix, SpinorLayout, I, ONE, ZERO};
use crate::C64;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct DiracMatrixSet {
    pub alpha1: Mat4,
    pub alpha2: Mat4,
    pub alpha3: Mat4,
    pub beta: Mat4,
    pub sigma1: Mat2,
    pub sigma2: Mat2,
    pub sigma3: Mat2,
    pub representation_name: String,
}

pub fn pauli() -> [Mat2; 3] {
    [
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, -I], [I, ZERO]],
        [[ONE, ZERO], [ZERO, -ONE]],
    ]
}

fn off_diagonal(s: &Mat2) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j + 2] = s[i][j];
            m[i + 2][j] = s[i][j];
        }
    }
    m
}

pub fn dirac_matrices() -> DiracMatrixSet {
    let [s1, s2, s3] = pauli();
    let mut beta = [[ZERO; 4]; 4];
    for (i, row) in beta.iter_mut().enumerate() {
        row[i] = if i < 2 { ONE } else { -ONE };
    }
    DiracMatrixSet {
        alpha1: off_diagonal(&s1),
        alpha2: off_diagonal(&s2),
        alpha3: off_diagonal(&s3),
        beta,
        sigma1: s1,
        sigma2: s2,
        sigma3: s3,
        representation_name: "dirac".to_string(),
    }
}

impl DiracMatrixSet {
    /// `[beta, alpha1, alpha2, alpha3]`
    pub fn gammas(&self) -> [Mat4; 4] {
        [self.beta, self.alpha1, self.alpha2, self.alpha3]
    }
}

pub fn mul<const N: usize>(a: &[[C64; N]; N], b: &[[C64; N]; N]) -> [[C64; N]; N] {
    let mut out = [[ZERO; N]; N];
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn identity<const N: usize>() -> [[C64; N]; N] {
    let mut out = [[ZERO; N]; N];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = ONE;
    }
    out
}

pub fn adjoint<const N: usize>(a: &[[C64; N]; N]) -> [[C64; N]; N] {
    let mut out = [[ZERO; N]; N];
    for i in 0..N {
        for j in 0..N {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

pub fn max_abs_diff<const N: usize>(a: &[[C64; N]; N], b: &[[C64; N]; N]) -> f64 {
    let mut r = 0.0f64;
    for i in 0..N {
        for j in 0..N {
            r = r.max((a[i][j] - b[i][j]).norm());
        }
    }
    r
}

/// `max |{g_i, g_j} - 2 δ_ij|` over the four Dirac matrices.
pub fn clifford_residual(set: &DiracMatrixSet) -> f64 {
    let g = set.gammas();
    let id = identity::<4>();
    let mut r = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let ab = mul(&g[i], &g[j]);
            let ba = mul(&g[j], &g[i]);
            for p in 0..4 {
                for q in 0..4 {
                    let target = if i == j { 2.0 * id[p][q] } else { ZERO };
                    r = r.max((ab[p][q] + ba[p][q] - target).norm());
                }
            }
        }
    }
    r
}

/// `max |σ_i σ_j - δ_ij - i ε_ijk σ_k|`
pub fn pauli_residual(set: &DiracMatrixSet) -> f64 {
    let s = [set.sigma1, set.sigma2, set.sigma3];
    let eps = |i: usize, j: usize, k: usize| -> f64 {
        match (i, j, k) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    };
    let mut r = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let mut rhs = if i == j { identity::<2>() } else { [[ZERO; 2]; 2] };
            for (k, sk) in s.iter().enumerate() {
                let e = eps(i, j, k);
                if e != 0.0 {
                    for p in 0..2 {
                        for q in 0..2 {
                            rhs[p][q] += c(0.0, e) * sk[p][q];
                        }
                    }
                }
            }
            r = r.max(max_abs_diff(&mul(&s[i], &s[j]), &rhs));
        }
    }
    r
}

/// Spinor permutation taking the standard 4-spinor to `K ⊕ K̃` order,
/// 0-based: new component `k` is old component `INTERNAL_PERM[k]`.
pub const INTERNAL_PERM: [usize; 4] = [0, 3, 1, 2];

/// Splits `H₀(0) = α₁Π₁ + α₂Π₂ + β(m + rW)` into `K = H⁰` (components 1,4)
/// and `K̃` (components 2,3).
pub fn block_decompose_internal(h00: &OperatorMatrix) -> Result<(OperatorMatrix, OperatorMatrix, [usize; 4])> {
    let layout = h00.layout;
    if layout.spinor != 4 || layout.x3_sites != 1 {
        return Err(Error::IncompatibleSparsity(format!(
            "expected a single-slice 4-spinor operator, got layout {layout:?}"
        )));
    }
    let s = h00.to_sparse();
    let nt = layout.transverse_sites;
    let mut block_of = [0usize; 4];
    let mut slot = [0usize; 4];
    for (k, &old) in INTERNAL_PERM.iter().enumerate() {
        block_of[old] = k / 2;
        slot[old] = k % 2;
    }
    let mut tk = Vec::new();
    let mut tkt = Vec::new();
    for (i, j, v) in s.triplets() {
        let (ti, si) = (i / 4, i % 4);
        let (tj, sj) = (j / 4, j % 4);
        if block_of[si] != block_of[sj] {
            return Err(Error::IncompatibleSparsity(format!(
                "entry ({i},{j}) couples spinor components {si} and {sj} across blocks"
            )));
        }
        let t = (ti * 2 + slot[si], tj * 2 + slot[sj], v);
        if block_of[si] == 0 {
            tk.push(t);
        } else {
            tkt.push(t);
        }
    }
    let l2 = SpinorLayout::new(1, nt, 2);
    let k = OperatorMatrix::sparse(SparseMatrix::from_triplets(2 * nt, tk), h00.hermitian, l2);
    let kt = OperatorMatrix::sparse(SparseMatrix::from_triplets(2 * nt, tkt), h00.hermitian, l2);
    check_block_signs(&k, &kt)?;
    Ok((k, kt, INTERNAL_PERM))
}

/// In the standard representation the spinor diagonal of `K` and `K̃` is the
/// same mass operator with sign (+, −); anything else is a foreign layout.
fn check_block_signs(k: &OperatorMatrix, kt: &OperatorMatrix) -> Result<()> {
    let (a, b) = (k.to_sparse(), kt.to_sparse());
    let nt = k.layout.transverse_sites;
    for t in 0..nt {
        for u in 0..nt {
            let (k00, k11) = (a.get(2 * t, 2 * u), a.get(2 * t + 1, 2 * u + 1));
            let (q00, q11) = (b.get(2 * t, 2 * u), b.get(2 * t + 1, 2 * u + 1));
            let scale = 1.0 + k00.norm();
            if (k00 + k11).norm() > 1e-13 * scale
                || (k00 - q00).norm() > 1e-13 * scale
                || (q00 + q11).norm() > 1e-13 * scale
            {
                return Err(Error::IncompatibleSparsity(format!(
                    "spinor-diagonal entries at sites ({t},{u}) do not match the β mass structure"
                )));
            }
        }
    }
    Ok(())
}

/// Inverse of [`block_decompose_internal`].
pub fn reassemble_internal(k: &OperatorMatrix, kt: &OperatorMatrix, perm: [usize; 4]) -> OperatorMatrix {
    let nt = k.layout.transverse_sites;
    let mut t = Vec::new();
    for (blk, m) in [k, kt].into_iter().enumerate() {
        for (i, j, v) in m.to_sparse().triplets() {
            let si = perm[blk * 2 + i % 2];
            let sj = perm[blk * 2 + j % 2];
            t.push(((i / 2) * 4 + si, (j / 2) * 4 + sj, v));
        }
    }
    OperatorMatrix::sparse(
        SparseMatrix::from_triplets(4 * nt, t),
        k.hermitian && kt.hermitian,
        SpinorLayout::new(1, nt, 4),
    )
}

/// Site-wise `iσ₂`: the unitary with `U K U* = −K̃` in the standard
/// representation.
pub fn internal_flip_unitary(transverse_sites: usize) -> SparseMatrix {
    let mut t = Vec::with_capacity(2 * transverse_sites);
    for s in 0..transverse_sites {
        t.push((2 * s, 2 * s + 1, ONE));
        t.push((2 * s + 1, 2 * s, -ONE));
    }
    SparseMatrix::from_triplets(2 * transverse_sites, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clifford_and_pauli_relations_are_exact() {
        let d = dirac_matrices();
        assert_eq!(clifford_residual(&d), 0.0);
        assert_eq!(pauli_residual(&d), 0.0);
        assert_eq!(max_abs_diff(&mul(&d.beta, &d.beta), &identity()), 0.0);
        let ab = mul(&d.alpha3, &d.beta);
        let ba = mul(&d.beta, &d.alpha3);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(ab[i][j] + ba[i][j], ZERO);
            }
        }
    }

    #[test]
    fn all_matrices_hermitian_involutions() {
        let d = dirac_matrices();
        for g in d.gammas() {
            assert_eq!(max_abs_diff(&g, &adjoint(&g)), 0.0);
            assert_eq!(max_abs_diff(&mul(&g, &g), &identity()), 0.0);
        }
        for s in [d.sigma1, d.sigma2, d.sigma3] {
            assert_eq!(max_abs_diff(&s, &adjoint(&s)), 0.0);
        }
    }

    #[test]
    fn rejects_cross_block_coupling() {
        let t = vec![(0, 1, ONE), (1, 0, ONE)];
        let op = OperatorMatrix::sparse(SparseMatrix::from_triplets(4, t), true, SpinorLayout::new(1, 1, 4));
        assert!(matches!(block_decompose_internal(&op), Err(Error::IncompatibleSparsity(_))));
    }
}
