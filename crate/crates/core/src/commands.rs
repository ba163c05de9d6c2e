//! The five batch commands.  Each validates the configuration before touching
//! the output directory and returns the list of files it wrote.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::GaugeField;
use crate::lap::{gap_eigenvalues_from, lap_scan, local_level_spacing, transverse_gaussian, weighted_vector, LapScanResult, ResolventSolver, Verdict};
use crate::lattice::{build_h00, build_h0_3d, build_internal_h, build_t, edge_weight, Boundary, FiberDecomposition, LatticeSpec, DEFAULT_NONZERO_BUDGET};
use crate::linalg::{c, col_to_vec, norm, OperatorMatrix};
use crate::mourre::{mourre_lower_bound, verify_mourre_inequality, SmoothStepF};
use crate::potentials::{build_perturbed_h, classify_decay, coulomb_bound_verify, default_radii, lattice_points, snapped_spec, DecayReport, Theta};
use crate::report::{Cell, Reporter};
use crate::spectra::{count_below, default_cluster_tol, eig_dense, find_gaps, multiset_distance, symmetrize, GapList, SpectrumResult, SymmetrizedSpectrum, WindowOptions, DEFAULT_DENSE_CAP, DEFAULT_FACTOR_CAP};
use crate::spinor::{clifford_residual, dirac_matrices, pauli_residual};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    InternalSpectrum,
    MourreSweep,
    PerturbedAnalysis,
    LapScan,
    Selftest,
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "internal-spectrum" => Command::InternalSpectrum,
            "mourre-sweep" => Command::MourreSweep,
            "perturbed-analysis" => Command::PerturbedAnalysis,
            "lap-scan" => Command::LapScan,
            "selftest" => Command::Selftest,
            other => return Err(Error::Config(format!("unknown command {other}"))),
        })
    }
}

/// Loads, validates and runs.  Nothing is written unless validation passes,
/// except the violation report of `perturbed-analysis` for `ν ≥ 1`.
pub fn run(command: Command, config_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = RunConfig::load(config_path)?;
    run_config(command, &cfg, out_dir)
}

pub fn run_config(command: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    crate::init_deterministic();
    if let Err(e) = cfg.validate() {
        if matches!(e, Error::Hypothesis(_)) && command == Command::PerturbedAnalysis {
            let mut rep = Reporter::new(out_dir, &cfg.hash())?;
            write_violation_report(cfg, &mut rep, &e)?;
        }
        return Err(e);
    }
    let mut rep = Reporter::new(out_dir, &cfg.hash())?;
    match command {
        Command::InternalSpectrum => cmd_internal_spectrum(cfg, &mut rep)?,
        Command::MourreSweep => cmd_mourre_sweep(cfg, &mut rep)?,
        Command::PerturbedAnalysis => cmd_perturbed_analysis(cfg, &mut rep)?,
        Command::LapScan => cmd_lap_scan(cfg, &mut rep)?,
        Command::Selftest => cmd_selftest(cfg, &mut rep)?,
    }
    Ok(rep.written().to_vec())
}

/// The `(x₁, x₂)` part of a lattice with the given spinor size.
pub fn transverse_lattice(lattice: &LatticeSpec, spinor: usize) -> LatticeSpec {
    let mut l = lattice.clone();
    l.extents.truncate(2);
    l.points.truncate(2);
    l.spinor_components = spinor;
    l
}

fn require_3d(lattice: &LatticeSpec, what: &str) -> Result<()> {
    if lattice.dims() != 3 {
        return Err(Error::Config(format!("{what} needs a 3-D lattice")));
    }
    if lattice.spinor_components != 4 {
        return Err(Error::Config(format!("{what} needs 4 spinor components")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct InternalSpectrum {
    pub spectrum: SpectrumResult,
    pub filtered_edge_states: usize,
    pub sym: SymmetrizedSpectrum,
    pub gaps: GapList,
    /// `√(2n|B₀| + m²)` for a constant field.
    pub analytic_levels: Option<Vec<f64>>,
}

pub fn compute_internal_spectrum(cfg: &RunConfig) -> Result<InternalSpectrum> {
    let lat = transverse_lattice(&cfg.lattice, 2);
    let gauge = GaugeField::new(cfg.field.clone())?;
    let h = build_internal_h(&lat, &gauge, cfg.mass, cfg.wilson_r)?;
    let dirichlet = lat.boundary == Boundary::Dirichlet;
    let mut spectrum = eig_dense(&h, DEFAULT_DENSE_CAP, dirichlet)?;
    let mut filtered = 0;
    if dirichlet {
        let vecs = spectrum.vectors.take().expect("vectors requested");
        let keep: Vec<f64> = (0..spectrum.raw.len())
            .filter(|&j| edge_weight(&lat, &col_to_vec(vecs.as_ref(), j), 2) <= cfg.internal_spectrum.edge_threshold)
            .map(|j| spectrum.raw[j])
            .collect();
        filtered = spectrum.raw.len() - keep.len();
        spectrum = SpectrumResult::from_raw(keep, spectrum.resolution, spectrum.method, None, None);
    }
    let sym = symmetrize(&spectrum.raw, spectrum.resolution, "internal")?;
    let b = &cfg.internal_spectrum;
    let gaps = find_gaps(&sym, (b.gap_range[0], b.gap_range[1]), b.min_gap_width.max(2.0 * sym.resolution))?;
    let analytic_levels = cfg.field.constant_strength().map(|b0| {
        let top = b.gap_range[1].abs().max(b.gap_range[0].abs());
        (0..)
            .map(|n| (2.0 * n as f64 * b0.abs() + cfg.mass * cfg.mass).sqrt())
            .take_while(|&e| e <= top)
            .take(if b0 == 0.0 { 1 } else { usize::MAX })
            .collect()
    });
    Ok(InternalSpectrum { spectrum, filtered_edge_states: filtered, sym, gaps, analytic_levels })
}

#[derive(Serialize)]
struct InternalSummary<'a> {
    mu0: f64,
    eigenvalue_count: usize,
    filtered_edge_states: usize,
    resolution: f64,
    gaps: &'a [(f64, f64)],
    analytic_levels: &'a Option<Vec<f64>>,
}

fn cmd_internal_spectrum(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let r = compute_internal_spectrum(cfg)?;
    let s = &r.spectrum;
    let rows: Vec<Vec<Cell>> = (0..s.eigenvalues.len()).map(|k| vec![s.eigenvalues[k].into(), s.multiplicities[k].into()]).collect();
    rep.csv("internal_spectrum.csv", &["eigenvalue", "multiplicity"], &rows)?;
    let rows: Vec<Vec<Cell>> = r.sym.values.iter().zip(&r.sym.multiplicities).map(|(v, m)| vec![(*v).into(), (*m).into()]).collect();
    rep.csv("sigma_sym.csv", &["value", "multiplicity"], &rows)?;
    let rows: Vec<Vec<Cell>> = r.gaps.intervals.iter().map(|(a, b)| vec![(*a).into(), (*b).into()]).collect();
    rep.csv("gaps.csv", &["lo", "hi"], &rows)?;
    rep.json(
        "internal_summary.json",
        &InternalSummary {
            mu0: r.sym.mu0,
            eigenvalue_count: s.raw.len(),
            filtered_edge_states: r.filtered_edge_states,
            resolution: r.sym.resolution,
            gaps: &r.gaps.intervals,
            analytic_levels: &r.analytic_levels,
        },
    )?;
    if cfg.internal_spectrum.write_operator {
        let lat = transverse_lattice(&cfg.lattice, 2);
        let h = build_internal_h(&lat, &GaugeField::new(cfg.field.clone())?, cfg.mass, cfg.wilson_r)?;
        let mut buf = Vec::new();
        h.write_coo(&mut buf)?;
        rep.text("internal_operator.coo", &buf)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct MourreRow {
    pub lambda: f64,
    pub bound_formula: f64,
    pub window_bound: Option<f64>,
    pub measured_inf: Option<f64>,
    pub window_dim: Option<usize>,
    pub in_sigma_sym: bool,
    pub satisfied: Option<bool>,
}

pub fn compute_mourre_sweep(cfg: &RunConfig) -> Result<Vec<MourreRow>> {
    let m = &cfg.mourre_sweep;
    let sym = match &m.sigma_sym {
        Some(v) => symmetrize(v, 1e-8, "config")?,
        None => compute_internal_spectrum(cfg)?.sym,
    };
    let lambdas = m.lambdas.points();
    let mut rows: Vec<MourreRow> = lambdas
        .iter()
        .map(|&l| MourreRow {
            lambda: l,
            bound_formula: mourre_lower_bound(l, &sym, &cfg.f),
            window_bound: None,
            measured_inf: None,
            window_dim: None,
            in_sigma_sym: sym.values.iter().any(|v| (v - l).abs() <= sym.resolution),
            satisfied: None,
        })
        .collect();
    if m.measured {
        require_3d(&cfg.lattice, "measured mourre-sweep")?;
        let gauge = GaugeField::new(cfg.field.clone())?;
        let h00 = build_h00(&transverse_lattice(&cfg.lattice, 4), &gauge, cfg.mass, cfg.wilson_r)?;
        let h0 = build_h0_3d(&cfg.lattice, &h00, DEFAULT_NONZERO_BUDGET)?;
        let eig = eig_dense(&h0, m.dense_cap, true)?;
        let t = build_t(&cfg.lattice, &cfg.f)?;
        let minus_t = OperatorMatrix::sparse(t.to_sparse().scaled(c(-1.0, 0.0)), true, t.layout);
        for row in &mut rows {
            let s = if row.lambda >= 0.0 { &t } else { &minus_t };
            let r = verify_mourre_inequality(&eig, s, row.lambda, m.epsilon, &sym, &cfg.f, m.tolerance)?;
            row.window_bound = Some(r.bound_formula);
            row.measured_inf = Some(r.measured_inf);
            row.window_dim = Some(r.window_dim);
            row.satisfied = Some(r.satisfied);
        }
    }
    Ok(rows)
}

fn opt_f(v: Option<f64>) -> Cell {
    v.map_or(Cell::S(String::new()), Cell::F)
}

fn cmd_mourre_sweep(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let rows = compute_mourre_sweep(cfg)?;
    let cells: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.into(),
                r.bound_formula.into(),
                opt_f(r.window_bound),
                opt_f(r.measured_inf),
                r.window_dim.map_or(Cell::S(String::new()), Cell::U),
                r.in_sigma_sym.into(),
                r.satisfied.map_or(Cell::S(String::new()), Cell::B),
            ]
        })
        .collect();
    rep.csv(
        "mourre_sweep.csv",
        &["lambda", "bound_formula", "window_bound", "measured_inf", "window_dim", "in_sigma_sym", "satisfied"],
        &cells,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ViolationReport {
    nu: f64,
    limit: f64,
    message: String,
    /// `max(‖V_c(x)‖ − Σ ν/|x − a|)` over the lattice, when computable.
    sampled_bound_excess: Option<f64>,
}

fn write_violation_report(cfg: &RunConfig, rep: &mut Reporter, e: &Error) -> Result<()> {
    let (nu, excess) = match &cfg.potential {
        Some(p) => {
            let excess = if cfg.lattice.dims() == 3 {
                coulomb_bound_verify(&snapped_spec(p, &cfg.lattice), &lattice_points(&cfg.lattice)).ok()
            } else {
                None
            };
            (p.nu, excess)
        }
        None => (f64::NAN, None),
    };
    rep.json("coulomb_violation.json", &ViolationReport { nu, limit: 1.0, message: e.to_string(), sampled_bound_excess: excess })?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolutionInfo {
    pub points: [usize; 2],
    pub dim: usize,
    pub mu0: f64,
    pub coulomb_violation: f64,
    pub max_sampled_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountComparison {
    pub energy: f64,
    pub count_h0: usize,
    pub count_h: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbedAnalysis {
    pub gap: (f64, f64),
    pub resolutions: Vec<ResolutionInfo>,
    pub gap_eigenvalues: Vec<crate::lap::GapEigenvalue>,
    pub raw_counts: Vec<usize>,
    pub decay: DecayReport,
    pub comparison: Vec<CountComparison>,
    /// Some `vloc` term is tabulated; point sampling may miss its singular
    /// behaviour between grid points.
    pub vloc_sampling_limited: bool,
    /// Finite-lattice counts only indicate the infinite-volume spectrum.
    pub comparison_note: &'static str,
}

const COMPARISON_NOTE: &str = "heuristic: finite-lattice eigenvalue counts, not an essential spectrum computation";

pub fn lattice_at(base: &LatticeSpec, res: [usize; 2]) -> LatticeSpec {
    let mut l = base.clone();
    l.points = vec![res[0], res[0], res[1]];
    l
}

pub fn compute_perturbed_analysis(cfg: &RunConfig) -> Result<PerturbedAnalysis> {
    let spec = cfg.potential.as_ref().ok_or_else(|| Error::Config("perturbed-analysis needs a potential block".into()))?;
    require_3d(&cfg.lattice, "perturbed-analysis")?;
    let b = &cfg.perturbed_analysis;
    let resolutions = if b.resolutions.is_empty() { vec![[cfg.lattice.points[0], cfg.lattice.points[2]]] } else { b.resolutions.clone() };
    if cfg.lattice.points[0] != cfg.lattice.points[1] && !b.resolutions.is_empty() {
        return Err(Error::Config("resolutions assume a square transverse lattice".into()));
    }
    let gauge = GaugeField::new(cfg.field.clone())?;
    let mut infos = Vec::new();
    let mut h0s = Vec::new();
    let mut hs = Vec::new();
    for &r in &resolutions {
        let lat = if b.resolutions.is_empty() { cfg.lattice.clone() } else { lattice_at(&cfg.lattice, r) };
        let h00 = build_h00(&transverse_lattice(&lat, 4), &gauge, cfg.mass, cfg.wilson_r)?;
        let mu0 = FiberDecomposition::new(&lat, &h00)?.mu0();
        let h0 = build_h0_3d(&lat, &h00, DEFAULT_NONZERO_BUDGET)?;
        let (h, info) = build_perturbed_h(&h0, spec, &lat)?;
        infos.push(ResolutionInfo { points: r, dim: h.dim(), mu0, coulomb_violation: info.coulomb_violation, max_sampled_norm: info.max_sampled_norm });
        h0s.push(h0);
        hs.push(h);
    }
    let gap = match b.gap {
        Some([lo, hi]) => (lo, hi),
        None => {
            let mu0 = infos.iter().fold(f64::INFINITY, |m, i| m.min(i.mu0));
            let tol = hs.iter().fold(0.0f64, |m, h| m.max(default_cluster_tol(h.norm_bound())));
            (-mu0 + tol, mu0 - tol)
        }
    };
    let opts = WindowOptions { seed: cfg.seed, ..WindowOptions::default() };
    let (gap_eigenvalues, raw_counts) = gap_eigenvalues_from(&hs, (gap.0, gap.1), b.max_count, b.move_tolerance, &opts)?;
    let radii = b.radii.clone().unwrap_or_else(default_radii);
    let decay = classify_decay(spec, &radii, &Theta { f: cfg.f })?;
    let mut comparison = Vec::new();
    if h0s[0].dim() <= DEFAULT_FACTOR_CAP {
        for &e in &b.comparison_energies {
            comparison.push(CountComparison { energy: e, count_h0: count_below(&h0s[0], e), count_h: count_below(&hs[0], e) });
        }
    }
    let vloc_sampling_limited = spec.vloc.iter().any(|t| matches!(t.profile, crate::potentials::Profile::Tabulated { .. }));
    Ok(PerturbedAnalysis {
        gap,
        resolutions: infos,
        gap_eigenvalues,
        raw_counts,
        decay,
        comparison,
        vloc_sampling_limited,
        comparison_note: COMPARISON_NOTE,
    })
}

fn cmd_perturbed_analysis(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let a = compute_perturbed_analysis(cfg)?;
    let rows: Vec<Vec<Cell>> = a
        .gap_eigenvalues
        .iter()
        .map(|g| {
            let hist: Vec<String> = g.history.iter().map(|v| crate::report::format_f64(*v)).collect();
            vec![g.eigenvalue.into(), g.multiplicity.into(), g.stable.into(), hist.join(";").into()]
        })
        .collect();
    rep.csv("gap_eigenvalues.csv", &["eigenvalue", "multiplicity", "stable", "history"], &rows)?;
    let rows: Vec<Vec<Cell>> = a
        .resolutions
        .iter()
        .zip(&a.raw_counts)
        .map(|(r, n)| vec![r.points[0].into(), r.points[1].into(), r.dim.into(), r.mu0.into(), (*n).into(), r.coulomb_violation.into(), r.max_sampled_norm.into()])
        .collect();
    rep.csv(
        "coulomb_bound.csv",
        &["transverse_points", "x3_points", "dim", "mu0", "gap_count", "max_bound_excess", "max_sampled_norm"],
        &rows,
    )?;
    let rows: Vec<Vec<Cell>> = a
        .comparison
        .iter()
        .map(|c| vec![c.energy.into(), c.count_h0.into(), c.count_h.into(), (c.count_h as i64 - c.count_h0 as i64).into()])
        .collect();
    rep.csv("spectral_comparison.csv", &["energy", "count_h0", "count_h", "difference"], &rows)?;
    rep.json("decay.json", &a.decay)?;
    rep.json("perturbed_summary.json", &a)?;
    Ok(())
}

/// The operator scanned by `lap-scan`: `H₀ + V` when a potential is
/// configured, `H₀` otherwise.
pub fn lap_operator(cfg: &RunConfig) -> Result<OperatorMatrix> {
    require_3d(&cfg.lattice, "lap-scan")?;
    let gauge = GaugeField::new(cfg.field.clone())?;
    let h00 = build_h00(&transverse_lattice(&cfg.lattice, 4), &gauge, cfg.mass, cfg.wilson_r)?;
    let h0 = build_h0_3d(&cfg.lattice, &h00, DEFAULT_NONZERO_BUDGET)?;
    match &cfg.potential {
        Some(p) => Ok(build_perturbed_h(&h0, p, &cfg.lattice)?.0),
        None => Ok(h0),
    }
}

pub fn compute_lap_scan(cfg: &RunConfig) -> Result<Vec<LapScanResult>> {
    let b = &cfg.lap_scan;
    if b.lambdas.is_empty() {
        return Ok(Vec::new());
    }
    let h = lap_operator(cfg)?;
    let tr = transverse_gaussian(&cfg.lattice, b.transverse_width, b.spinor_component);
    let psi = weighted_vector(&cfg.lattice, b.weight_exponent, b.profile, &tr)?.psi;
    let solver = if h.dim() <= b.dense_cap {
        ResolventSolver::spectral(&h)?
    } else {
        ResolventSolver::ShiftedMinres { max_iterations: b.max_iterations }
    };
    let tol = default_cluster_tol(h.norm_bound());
    let mut out = Vec::with_capacity(b.lambdas.len());
    for &lambda in &b.lambdas {
        let spacing = match solver.eigenvalues() {
            Some(ev) => local_level_spacing(ev, lambda, tol),
            None => 0.0,
        };
        let eps0 = match (b.eps0, solver.eigenvalues()) {
            (Some(e), _) => e,
            (None, Some(_)) => crate::lap::SPACING_FACTOR * spacing,
            (None, None) => return Err(Error::Config("lap_scan.eps0 is required above the dense cap".into())),
        };
        out.push(lap_scan(&solver, &h, lambda, &psi, eps0, b.levels, b.sign, spacing)?);
    }
    Ok(out)
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Convergent => "convergent",
        Verdict::Divergent => "divergent",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn cmd_lap_scan(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let results = compute_lap_scan(cfg)?;
    let mut summary = Vec::new();
    for (k, r) in results.iter().enumerate() {
        let rows: Vec<Vec<Cell>> = (0..r.epsilons.len())
            .map(|i| {
                let d = if i == 0 { f64::NAN } else { r.diffs[i - 1] };
                vec![r.epsilons[i].into(), r.values[i].re.into(), r.values[i].im.into(), d.into(), r.solver_residuals[i].into()]
            })
            .collect();
        rep.csv(&format!("lap_scan_{k:03}.csv"), &["epsilon", "re", "im", "diff", "residual"], &rows)?;
        let lim = r.extrapolated_limit;
        summary.push(vec![
            r.lambda.into(),
            r.epsilons[0].into(),
            verdict_str(r.verdict).into(),
            opt_f(lim.map(|z| z.re)),
            opt_f(lim.map(|z| z.im)),
            r.sign_invariant.into(),
            r.solver_residuals.iter().fold(0.0f64, |m, v| m.max(*v)).into(),
        ]);
    }
    rep.csv("lap_summary.csv", &["lambda", "eps0", "verdict", "limit_re", "limit_im", "sign_invariant", "max_residual"], &summary)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, threshold: f64) -> SelftestCheck {
    SelftestCheck { name: name.into(), value, threshold, pass: value <= threshold }
}

/// Small built-in models; random test vectors are drawn from `cfg.seed`.
pub fn compute_selftest(cfg: &RunConfig) -> Result<Vec<SelftestCheck>> {
    let mut out = Vec::new();
    let d = dirac_matrices();
    out.push(check("clifford_residual", clifford_residual(&d), 1e-15));
    out.push(check("pauli_residual", pauli_residual(&d), 1e-15));

    let gauge = GaugeField::new(crate::field::FieldSpec::Constant { b0: 1.0 })?;
    let mut lat2 = LatticeSpec::magnetic_square(12, 2, 1.0);
    lat2.spinor_components = 2;
    let h = build_internal_h(&lat2, &gauge, 1.0, 0.125)?;
    out.push(check("internal_hermiticity", h.hermiticity_residual(), 1e-14));
    let ev = eig_dense(&h, DEFAULT_DENSE_CAP, false)?;
    let lowest = ev.eigenvalues.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    out.push(check("lowest_landau_level_relative_error", (lowest - 1.0).abs(), 0.05));

    let lat = LatticeSpec::magnetic_square(4, 1, 1.0).with_x3(8, 4.0);
    let h00 = build_h00(&transverse_lattice(&lat, 4), &gauge, 1.0, 0.125)?;
    let base: Vec<f64> = crate::linalg::hermitian_eigenvalues(h00.to_dense().as_ref())?;
    let mut worst = 0.0f64;
    for xi in [0.3, 1.1, -2.0] {
        let hx = crate::lattice::build_fiber_h(&h00, xi)?;
        let sq: Vec<f64> = crate::linalg::hermitian_eigenvalues(hx.to_dense().as_ref())?.iter().map(|v| v * v).collect();
        let pred: Vec<f64> = base.iter().map(|v| v * v + xi * xi).collect();
        worst = worst.max(multiset_distance(&sq, &pred));
    }
    out.push(check("fiber_law", worst, 1e-10));

    let h0 = build_h0_3d(&lat, &h00, DEFAULT_NONZERO_BUDGET)?;
    let fibers = FiberDecomposition::new(&lat, &h00)?;
    let all = eig_dense(&h0, DEFAULT_DENSE_CAP, false)?;
    out.push(check("fiber_spectrum_matches_dense", multiset_distance(&all.raw, &fibers.eigenvalues()), 1e-10));
    let mu0 = fibers.mu0();
    let inside = all.raw.iter().filter(|v| v.abs() < mu0 - all.resolution).count();
    out.push(check("gap_of_h0_count", inside as f64, 0.0));

    let sym = symmetrize(&[1.0, 3f64.sqrt(), 5f64.sqrt()], 1e-9, "landau")?;
    let f = SmoothStepF::BumpIntegral;
    let below = mourre_lower_bound(0.5, &sym, &f);
    out.push(check("mourre_bound_empty_set_is_infinite", if below.is_infinite() { 0.0 } else { 1.0 }, 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = h0.dim();
    let psi: Vec<C64> = (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let np = norm(&psi);
    let psi: Vec<C64> = psi.iter().map(|v| v / np).collect();
    let solver = ResolventSolver::spectral(&h0)?;
    let lambda = 0.0;
    let spacing = local_level_spacing(solver.eigenvalues().unwrap(), lambda, all.resolution);
    let eps0 = 5.0 * spacing.max(0.1);
    let r = lap_scan(&solver, &h0, lambda, &psi, eps0, 6, crate::lap::Sign::Upper, spacing)?;
    out.push(check("lap_mid_gap_convergent", if r.verdict == Verdict::Convergent { 0.0 } else { 1.0 }, 0.0));
    out.push(check("lap_sign_invariant", if r.sign_invariant { 0.0 } else { 1.0 }, 0.0));
    let dense_lu = crate::lap::resolvent_apply(&ResolventSolver::DenseLu, &h0, c(0.3, 0.2), &psi)?.0;
    let spec = crate::lap::resolvent_apply(&solver, &h0, c(0.3, 0.2), &psi)?.0;
    let diff: Vec<C64> = dense_lu.iter().zip(&spec).map(|(a, b)| a - b).collect();
    out.push(check("resolvent_solver_agreement", norm(&diff), 1e-10));
    Ok(out)
}

fn cmd_selftest(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let checks = compute_selftest(cfg)?;
    let rows: Vec<Vec<Cell>> = checks.iter().map(|c| vec![c.name.clone().into(), c.value.into(), c.threshold.into(), c.pass.into()]).collect();
    rep.csv("selftest.csv", &["check", "value", "threshold", "pass"], &rows)?;
    rep.json("selftest.json", &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Error::InvalidArgument(format!("selftest failed: {}", failed.join(", "))));
    }
    Ok(())
}
