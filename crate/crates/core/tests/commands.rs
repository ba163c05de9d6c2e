use std::f64::consts::PI;
use std::path::Path;

use magdirac::commands::{compute_internal_spectrum, compute_lap_scan, compute_mourre_sweep, compute_perturbed_analysis, run, run_config, Command};
use magdirac::config::RunConfig;
use magdirac::lap::Verdict;
use magdirac::report::header_line;
use magdirac::Error;

fn base(extra: &str) -> RunConfig {
    let l = (2.0 * PI).sqrt();
    RunConfig::from_json(&format!(
        r#"{{"field": {{"kind": "constant", "b0": 1.0}}, "mass": 1.0, "wilson_r": 0.125, "seed": 7,
            "lattice": {{"extents": [{l}, {l}, 4.0], "points": [4, 4, 8], "boundary": {{"kind": "magnetic_periodic", "flux_quanta": 1}}}}{extra}}}"#
    ))
    .unwrap()
}

fn first_line(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["header"].as_str().unwrap().to_string()
    } else {
        text.lines().next().unwrap().to_string()
    }
}

fn assert_headers(files: &[std::path::PathBuf], cfg: &RunConfig) {
    assert!(!files.is_empty());
    let want = header_line(&cfg.hash());
    for f in files {
        assert_eq!(first_line(f), want, "{}", f.display());
    }
}

#[test]
fn internal_spectrum_writes_headed_files() {
    let cfg = base(r#", "internal_spectrum": {"write_operator": true}"#);
    let dir = tempfile::tempdir().unwrap();
    let files = run_config(Command::InternalSpectrum, &cfg, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["internal_spectrum.csv", "sigma_sym.csv", "gaps.csv", "internal_summary.json", "internal_operator.coo"] {
        assert!(names.iter().any(|x| x == n), "{n} missing from {names:?}");
    }
    assert_headers(&files, &cfg);
    let r = compute_internal_spectrum(&cfg).unwrap();
    assert_eq!(r.spectrum.raw.len(), 2 * 16);
    assert!(r.sym.mu0 > 0.5);
    assert!(r.gaps.intervals.iter().any(|(a, b)| *a < 0.0 && *b > 0.0));
}

#[test]
fn every_command_is_deterministic() {
    let cfg = base(
        r#", "mourre_sweep": {"lambdas": {"start": -2.0, "stop": 2.0, "count": 9}, "measured": true, "epsilon": 0.1},
             "lap_scan": {"lambdas": [0.0, 1.5], "levels": 6}"#,
    );
    for cmd in [Command::InternalSpectrum, Command::MourreSweep, Command::LapScan, Command::Selftest] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = run_config(cmd, &cfg, a.path()).unwrap();
        let fb = run_config(cmd, &cfg, b.path()).unwrap();
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{cmd:?} {}", x.display());
        }
        assert_headers(&fa, &cfg);
    }
}

#[test]
fn config_file_round_trip() {
    let cfg = base("");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    let out = dir.path().join("out");
    let files = run(Command::Selftest, &path, &out).unwrap();
    assert_headers(&files, &cfg);
}

#[test]
fn rejected_config_writes_nothing() {
    let mut cfg = base("");
    cfg.mass = -1.0;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let e = run_config(Command::InternalSpectrum, &cfg, &out).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn flux_mismatch_is_a_config_error() {
    let mut cfg = base("");
    cfg.lattice.extents[0] *= 1.01;
    let e = compute_internal_spectrum(&cfg).unwrap_err();
    assert!(matches!(e, Error::FluxQuantization { .. }));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn strong_coulomb_coupling_is_reported() {
    let cfg = base(r#", "potential": {"coulomb_centers": [[0.0, 0.0, 0.0]], "nu": 1.05}"#);
    let dir = tempfile::tempdir().unwrap();
    let e = run_config(Command::PerturbedAnalysis, &cfg, dir.path()).unwrap_err();
    assert!(matches!(e, Error::Hypothesis(_)));
    assert_eq!(e.exit_code(), 4);
    let report = dir.path().join("coulomb_violation.json");
    assert_eq!(first_line(&report), header_line(&cfg.hash()));
}

#[test]
fn mourre_formula_rows_follow_the_bound() {
    let cfg = base(r#", "mourre_sweep": {"lambdas": {"start": 0.0, "stop": 3.0, "count": 31}}"#);
    let rows = compute_mourre_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 31);
    let mu0 = compute_internal_spectrum(&cfg).unwrap().sym.mu0;
    for r in &rows {
        if r.lambda.abs() < mu0 {
            assert!(r.bound_formula.is_infinite());
        } else {
            assert!((0.0..=1.0).contains(&r.bound_formula));
        }
        assert!(r.measured_inf.is_none());
    }
}

#[test]
fn weak_coulomb_analysis_runs() {
    let cfg = base(
        r#", "potential": {"coulomb_centers": [[0.0, 0.0, 0.0]], "nu": 0.3, "cutoff": {"r_inner": 0.5, "r_outer": 1.5}},
             "perturbed_analysis": {"comparison_energies": [-3.0, 3.0]}"#,
    );
    let a = compute_perturbed_analysis(&cfg).unwrap();
    assert_eq!(a.resolutions.len(), 1);
    assert_eq!(a.raw_counts.len(), 1);
    assert!(a.gap.0 < 0.0 && a.gap.1 > 0.0);
    assert!(!a.vloc_sampling_limited);
    for g in &a.gap_eigenvalues {
        assert!(g.eigenvalue > a.gap.0 && g.eigenvalue < a.gap.1);
    }
    let dir = tempfile::tempdir().unwrap();
    let files = run_config(Command::PerturbedAnalysis, &cfg, dir.path()).unwrap();
    assert_headers(&files, &cfg);
}

#[test]
fn lap_scan_in_the_gap_converges() {
    let cfg = base(r#", "lap_scan": {"lambdas": [0.0]}"#);
    let r = compute_lap_scan(&cfg).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].verdict, Verdict::Convergent);
    assert!(r[0].sign_invariant);
    let empty = base("");
    assert!(compute_lap_scan(&empty).unwrap().is_empty());
    let dir = tempfile::tempdir().unwrap();
    let files = run_config(Command::LapScan, &empty, dir.path()).unwrap();
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(text.lines().count(), 2);
}
