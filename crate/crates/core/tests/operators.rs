use faer::Mat;
use magdirac::commands::transverse_lattice;
use magdirac::field::{curl_residual, transversal_gauge, FieldSpec, GaugeField};
use magdirac::lap::{gap_eigenvalues, lap_scan, local_level_spacing, resolvent_apply, transverse_gaussian, weighted_vector, ResolventSolver, Sign, Verdict, X3Profile};
use magdirac::lattice::*;
use magdirac::linalg::{c, hermitian_eigenvalues, OperatorMatrix, SparseMatrix, ONE};
use magdirac::mourre::{mourre_lower_bound, rho_measured, SmoothStepF};
use magdirac::potentials::{build_perturbed_h, MatrixSpec, MatrixTerm, NamedMatrix, PotentialSpec, Profile};
use magdirac::spectra::{default_cluster_tol, eig_dense, eig_window, multiset_distance, symmetrize, WindowOptions, DEFAULT_DENSE_CAP};
use magdirac::spinor::{block_decompose_internal, dirac_matrices, internal_flip_unitary, mul, reassemble_internal};
use magdirac::C64;

const R: f64 = 0.125;

fn gauge(b0: f64) -> GaugeField {
    GaugeField::new(FieldSpec::Constant { b0 }).unwrap()
}

/// 4×4 transverse, 8 slices: dimension 512.
fn small() -> (LatticeSpec, OperatorMatrix, OperatorMatrix) {
    let lat = LatticeSpec::magnetic_square(4, 1, 1.0).with_x3(8, 4.0);
    let h00 = build_h00(&transverse_lattice(&lat, 4), &gauge(1.0), 1.0, R).unwrap();
    let h0 = build_h0_3d(&lat, &h00, DEFAULT_NONZERO_BUDGET).unwrap();
    (lat, h00, h0)
}

fn dirichlet_periodic_field() -> (LatticeSpec, FieldSpec) {
    let lat = LatticeSpec { extents: vec![4.0, 5.0], points: vec![6, 7], boundary: Boundary::Dirichlet, spinor_components: 4 };
    let field = FieldSpec::Periodic { amplitude: 0.7, wave_vectors: vec![[1.0, 0.0], [0.0, 1.3]] };
    (lat, field)
}

fn max_abs(m: &Mat<C64>) -> f64 {
    let mut w = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            w = w.max(m[(i, j)].norm());
        }
    }
    w
}

#[test]
fn built_operators_are_hermitian() {
    let (lat, h00, h0) = small();
    let (dlat, field) = dirichlet_periodic_field();
    let g = GaugeField::new(field).unwrap();
    let mut d2 = dlat.clone();
    d2.spinor_components = 2;
    let f = SmoothStepF::BumpIntegral;
    let ops = [
        ("h00", h00.clone()),
        ("h0", h0),
        ("internal", build_internal_h(&d2, &g, 1.0, R).unwrap()),
        ("h00_dirichlet", build_h00(&dlat, &g, 0.5, 1.0).unwrap()),
        ("pi1", build_pi(&dlat, &g, 1).unwrap()),
        ("pi2", build_pi(&dlat, &g, 2).unwrap()),
        ("t", build_t(&lat, &f).unwrap()),
        ("a", build_a(&lat, &f).unwrap()),
        ("f_p3", build_f_of_p3(&lat, &f).unwrap()),
        ("fiber", build_fiber_h(&h00, 0.7).unwrap()),
    ];
    for (name, op) in ops {
        assert!(op.hermitian, "{name}");
        assert!(op.hermiticity_residual() <= 1e-12 * op.norm_bound().max(1.0), "{name}: {}", op.hermiticity_residual());
    }
    let w = build_wilson(&dlat, &g).unwrap();
    assert!(w.hermiticity_residual() <= 1e-14);
}

#[test]
fn block_split_reassembles_and_pairs_spectra() {
    let (dlat, field) = dirichlet_periodic_field();
    let h00 = build_h00(&dlat, &GaugeField::new(field).unwrap(), 1.0, 1.0).unwrap();
    let (k, kt, perm) = block_decompose_internal(&h00).unwrap();
    let back = reassemble_internal(&k, &kt, perm);
    assert_eq!(back.to_sparse().max_abs_diff(&h00.to_sparse()), 0.0);

    let ek = hermitian_eigenvalues(k.to_dense().as_ref()).unwrap();
    let ekt = hermitian_eigenvalues(kt.to_dense().as_ref()).unwrap();
    let full = hermitian_eigenvalues(h00.to_dense().as_ref()).unwrap();
    let mut union: Vec<f64> = ek.iter().copied().chain(ek.iter().map(|v| -v)).collect();
    union.sort_by(f64::total_cmp);
    assert!(multiset_distance(&full, &union) < 1e-10);
    let neg: Vec<f64> = ek.iter().map(|v| -v).collect();
    assert!(multiset_distance(&ekt, &neg) < 1e-10);

    // U K U* = −K̃ with the site-wise iσ₂.
    let u = internal_flip_unitary(dlat.transverse_sites());
    let conj = u.matmul(&k.to_sparse()).matmul(&u.adjoint());
    assert!(conj.add_scaled(ONE, &kt.to_sparse()).max_abs_entry() < 1e-14);
}

#[test]
fn exact_lattice_identities() {
    let (lat, h00, h0) = small();
    let nt = lat.transverse_sites();
    let a3 = alpha3_slice(nt);
    let h = h00.to_sparse();
    assert!(a3.matmul(&h).add_scaled(ONE, &h.matmul(&a3)).max_abs_entry() < 1e-14);

    let h2 = h.matmul(&h);
    for xi in [0.4, -1.7] {
        let hx = build_fiber_h(&h00, xi).unwrap().to_sparse();
        let lhs = hx.matmul(&hx);
        let rhs = h2.add_scaled(c(xi * xi, 0.0), &SparseMatrix::identity(h.dim()));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    let d0 = h0.to_dense();
    let p3 = p3_matrix(&lat);
    let p3sq = SparseMatrix::from_dense((&p3 * &p3).as_ref());
    let block = lat.layout().block();
    let rhs = SparseMatrix::kron(&SparseMatrix::identity(lat.n3()), &h2).add_scaled(ONE, &SparseMatrix::kron(&p3sq, &SparseMatrix::identity(block)));
    assert!(max_abs(&(&(&d0 * &d0) - &rhs.to_dense())) < 1e-11);

    let f = SmoothStepF::BumpIntegral;
    let t = build_t(&lat, &f).unwrap().to_dense();
    let fp = build_f_of_p3(&lat, &f).unwrap().to_dense();
    assert!(max_abs(&(&(&t * &t) - &(&fp * &fp))) < 1e-13);

    let (_, r) = build_t_r(&lat, &h0, &f, DEFAULT_DENSE_CAP).unwrap();
    let ev = hermitian_eigenvalues(r.to_dense().as_ref()).unwrap();
    assert!(ev[0] >= -1e-12 && *ev.last().unwrap() <= 1.0 + 1e-12, "{} {}", ev[0], ev.last().unwrap());
}

#[test]
fn internal_spectrum_is_symmetric() {
    let (_, h00, _) = small();
    let ev = hermitian_eigenvalues(h00.to_dense().as_ref()).unwrap();
    let neg: Vec<f64> = ev.iter().map(|v| -v).collect();
    assert!(multiset_distance(&ev, &neg) < 1e-12);
}

#[test]
fn fibers_reproduce_dense_spectrum_and_gap() {
    let (lat, h00, h0) = small();
    let fibers = FiberDecomposition::new(&lat, &h00).unwrap();
    let dense = eig_dense(&h0, DEFAULT_DENSE_CAP, false).unwrap();
    assert!(multiset_distance(&dense.raw, &fibers.eigenvalues()) < 1e-10);
    let sym = symmetrize(&hermitian_eigenvalues(h00.to_dense().as_ref()).unwrap(), default_cluster_tol(h00.norm_bound()), "t").unwrap();
    assert!((sym.mu0 - fibers.mu0()).abs() < 1e-12);
    assert!(dense.raw.iter().all(|e| e.abs() >= sym.mu0 - sym.resolution));
}

#[test]
fn gauge_vanishes_at_origin_and_curl_converges_at_second_order() {
    let (_, field) = dirichlet_periodic_field();
    let a = transversal_gauge(&field, [0.0, 0.0]).unwrap();
    assert_eq!(a, [0.0, 0.0]);
    let g = GaugeField::new(field.clone()).unwrap();
    let probes = [[0.3, -0.2], [1.1, 0.7], [-0.9, 1.4]];
    let coarse = curl_residual(&g, &field, &probes, 0.1).unwrap();
    let fine = curl_residual(&g, &field, &probes, 0.05).unwrap();
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn dense_pairs_have_small_residuals_and_window_agrees() {
    let (_, _, h0) = small();
    let dense = eig_dense(&h0, DEFAULT_DENSE_CAP, true).unwrap();
    let bound = 1e-8 * h0.norm_bound();
    assert!(dense.residual_norms.iter().all(|r| *r <= bound));
    let window = (0.8, 2.2);
    let w = eig_window(&h0, window, 400, &WindowOptions::default()).unwrap();
    let inside: Vec<f64> = dense.raw.iter().copied().filter(|e| *e > window.0 && *e < window.1).collect();
    assert!(!inside.is_empty());
    assert!(multiset_distance(&w.raw, &inside) < 1e-9);
}

#[test]
fn bounded_potential_obeys_weyl() {
    let (lat, _, h0) = small();
    let spec = PotentialSpec {
        regular: vec![MatrixTerm {
            profile: Profile::Gaussian { strength: 0.6, width: 1.0 },
            matrix: MatrixSpec::Named { name: NamedMatrix::Beta, scale: 1.0 },
        }],
        ..PotentialSpec::default()
    };
    let (h, info) = build_perturbed_h(&h0, &spec, &lat).unwrap();
    let e0 = eig_dense(&h0, DEFAULT_DENSE_CAP, false).unwrap();
    let e1 = eig_dense(&h, DEFAULT_DENSE_CAP, false).unwrap();
    let d = multiset_distance(&e0.raw, &e1.raw);
    assert!(d > 0.0 && d <= info.max_sampled_norm + 1e-10, "{d} vs {}", info.max_sampled_norm);
}

#[test]
fn projected_r_is_monotone_and_nonnegative() {
    let (lat, _, h0) = small();
    let eig = eig_dense(&h0, DEFAULT_DENSE_CAP, true).unwrap();
    let (_, r) = build_t_r(&lat, &h0, &SmoothStepF::BumpIntegral, DEFAULT_DENSE_CAP).unwrap();
    for lambda in [-2.3, -1.4, 1.2, 1.9, 2.6] {
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05, 0.02] {
            let (dim, v) = rho_measured(&eig, &r, lambda, eps).unwrap();
            assert!(v >= -1e-10);
            assert_eq!(dim == 0, v == f64::INFINITY);
            assert!(v >= prev - 1e-12, "lambda {lambda} eps {eps}");
            prev = v;
        }
    }
    let (dim, v) = rho_measured(&eig, &r, 0.0, 0.1).unwrap();
    assert_eq!((dim, v), (0, f64::INFINITY));
}

#[test]
fn bound_formula_vanishes_from_above_at_thresholds() {
    let sym = symmetrize(&[1.0, 2.0], 1e-9, "t").unwrap();
    let f = SmoothStepF::BumpIntegral;
    let vals: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|d| mourre_lower_bound(2.0 + d, &sym, &f)).collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    assert!(vals[3] < 1e-10);
    let near = mourre_lower_bound(1.5, &sym, &f);
    let nearer = mourre_lower_bound(1.5 + 1e-9, &sym, &f);
    assert!((near - nearer).abs() < 1e-6);
}

fn probe_vector(lat: &LatticeSpec) -> Vec<C64> {
    let tr = transverse_gaussian(lat, 1.0, 0);
    weighted_vector(lat, 1.0, X3Profile::GaussianX3 { width: 1.0 }, &tr).unwrap().psi
}

/// `1 ⊗ α₁α₂α₃β`, which anticommutes with every Dirac matrix.
fn chiral(lat: &LatticeSpec) -> SparseMatrix {
    let d = dirac_matrices();
    let p = mul(&mul(&d.alpha1, &d.alpha2), &mul(&d.alpha3, &d.beta));
    let p = Mat::from_fn(4, 4, |i, j| p[i][j]);
    SparseMatrix::kron(&SparseMatrix::identity(lat.n3() * lat.transverse_sites()), &SparseMatrix::from_dense(p.as_ref()))
}

#[test]
fn resolvent_values_have_the_sign_of_the_shift() {
    let (lat, _, h0) = small();
    let psi = probe_vector(&lat);
    let solver = ResolventSolver::spectral(&h0).unwrap();
    for im in [0.3, -0.3, 0.01, -0.01] {
        for re in [-1.5, 0.0, 1.2] {
            let (x, res) = resolvent_apply(&solver, &h0, c(re, im), &psi).unwrap();
            let v = magdirac::linalg::dot(&psi, &x);
            assert!(res < 1e-10);
            assert_eq!(v.im > 0.0, im > 0.0);
        }
    }
}

#[test]
fn mirrored_scans_are_conjugate_symmetric() {
    let (lat, _, h0) = small();
    let s = chiral(&lat);
    let h0s = h0.to_sparse();
    assert!(s.matmul(&h0s).matmul(&s.adjoint()).add_scaled(ONE, &h0s).max_abs_entry() < 1e-13);

    let psi = probe_vector(&lat);
    let mut spsi = vec![c(0.0, 0.0); psi.len()];
    s.matvec(&psi, &mut spsi);
    let solver = ResolventSolver::spectral(&h0).unwrap();
    for lambda in [0.3, 1.3, 2.1] {
        let a = lap_scan(&solver, &h0, -lambda, &psi, 0.4, 6, Sign::Upper, 0.0).unwrap();
        let b = lap_scan(&solver, &h0, lambda, &spsi, 0.4, 6, Sign::Upper, 0.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x + y.conj()).norm() < 1e-10 * (1.0 + x.norm()));
        }
    }
}

#[test]
fn convergent_verdict_survives_halving_eps0() {
    let (lat, _, h0) = small();
    let psi = probe_vector(&lat);
    let solver = ResolventSolver::spectral(&h0).unwrap();
    let ev = solver.eigenvalues().unwrap().to_vec();
    let spacing = local_level_spacing(&ev, 0.0, 1e-8);
    let eps0 = 20.0 * spacing;
    for e in [eps0, eps0 / 2.0] {
        let r = lap_scan(&solver, &h0, 0.0, &psi, e, 8, Sign::Upper, spacing).unwrap();
        assert_eq!(r.verdict, Verdict::Convergent, "eps0 {e}");
        assert!(r.sign_invariant);
    }
}

#[test]
fn free_operator_has_no_gap_eigenvalues() {
    let (lat, h00, h0) = small();
    let mu0 = FiberDecomposition::new(&lat, &h00).unwrap().mu0();
    let tol = default_cluster_tol(h0.norm_bound());
    let found = gap_eigenvalues(&[h0], (-mu0 + tol, mu0 - tol), 50, 5e-2, &WindowOptions::default()).unwrap();
    assert!(found.is_empty());
}
