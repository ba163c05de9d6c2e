//! Run configuration: one JSON document per invocation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::lap::{Sign, X3Profile};
use crate::lattice::LatticeSpec;
use crate::mourre::SmoothStepF;
use crate::potentials::PotentialSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldSpec,
    pub mass: f64,
    pub lattice: LatticeSpec,
    #[serde(default = "default_wilson_r")]
    pub wilson_r: f64,
    #[serde(rename = "F", default)]
    pub f: SmoothStepF,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub internal_spectrum: InternalSpectrumBlock,
    #[serde(default)]
    pub mourre_sweep: MourreSweepBlock,
    #[serde(default)]
    pub perturbed_analysis: PerturbedAnalysisBlock,
    #[serde(default)]
    pub lap_scan: LapScanBlock,
}

fn default_wilson_r() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InternalSpectrumBlock {
    /// Energy range searched for gaps.
    pub gap_range: [f64; 2],
    pub min_gap_width: f64,
    /// Eigenvectors with more than this weight within three sites of a
    /// Dirichlet edge are dropped.
    pub edge_threshold: f64,
    pub write_operator: bool,
}

impl Default for InternalSpectrumBlock {
    fn default() -> Self {
        InternalSpectrumBlock { gap_range: [-3.0, 3.0], min_gap_width: 1e-3, edge_threshold: 0.5, write_operator: false }
    }
}

/// Uniform grid `start + k (stop − start)/(count − 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MourreSweepBlock {
    pub lambdas: Grid,
    pub epsilon: f64,
    /// Dense measurement on the 3-D lattice in addition to the formula.
    pub measured: bool,
    pub tolerance: f64,
    pub dense_cap: usize,
    /// Internal eigenvalues to use instead of computing them.
    pub sigma_sym: Option<Vec<f64>>,
}

impl Default for MourreSweepBlock {
    fn default() -> Self {
        MourreSweepBlock {
            lambdas: Grid { start: 0.0, stop: 2.0, count: 41 },
            epsilon: 0.05,
            measured: false,
            tolerance: 1e-6,
            dense_cap: crate::spectra::DEFAULT_DENSE_CAP,
            sigma_sym: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbedAnalysisBlock {
    /// `[transverse points per axis, x3 points]`, coarsest first.  Empty
    /// means the configured lattice only.
    pub resolutions: Vec<[usize; 2]>,
    /// Window for gap eigenvalues; defaults to the discrete gap of `H₀`.
    pub gap: Option<[f64; 2]>,
    pub max_count: usize,
    pub move_tolerance: f64,
    pub radii: Option<Vec<f64>>,
    /// Energies at which eigenvalue counts of `H` and `H₀` are compared.
    pub comparison_energies: Vec<f64>,
}

impl Default for PerturbedAnalysisBlock {
    fn default() -> Self {
        PerturbedAnalysisBlock {
            resolutions: Vec::new(),
            gap: None,
            max_count: 200,
            move_tolerance: 5e-2,
            radii: None,
            comparison_energies: vec![-2.0, -1.5, 0.0, 1.5, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LapScanBlock {
    pub lambdas: Vec<f64>,
    /// Defaults to the spacing floor.
    pub eps0: Option<f64>,
    pub levels: usize,
    pub sign: Sign,
    pub weight_exponent: f64,
    pub profile: X3Profile,
    pub transverse_width: f64,
    pub spinor_component: usize,
    pub dense_cap: usize,
    pub max_iterations: usize,
}

impl Default for LapScanBlock {
    fn default() -> Self {
        LapScanBlock {
            lambdas: Vec::new(),
            eps0: None,
            levels: 8,
            sign: Sign::Upper,
            weight_exponent: 1.0,
            profile: X3Profile::GaussianX3 { width: 1.0 },
            transverse_width: 1.0,
            spinor_component: 0,
            dense_cap: crate::spectra::DEFAULT_DENSE_CAP,
            max_iterations: 2000,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without computing; `ν ≥ 1`
    /// surfaces as a hypothesis violation.
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config(format!("mass must be positive, got {}", self.mass)));
        }
        if !self.wilson_r.is_finite() || self.wilson_r < 0.0 {
            return Err(Error::Config("wilson_r must be a non-negative number".into()));
        }
        self.field.validate()?;
        self.lattice.validate()?;
        let b = &self.internal_spectrum;
        if !(b.gap_range[0] < b.gap_range[1]) || !(b.min_gap_width > 0.0) {
            return Err(Error::Config("internal_spectrum needs gap_range lo < hi and min_gap_width > 0".into()));
        }
        let m = &self.mourre_sweep;
        if !(m.epsilon > 0.0) || !(m.tolerance >= 0.0) {
            return Err(Error::Config("mourre_sweep needs epsilon > 0 and tolerance >= 0".into()));
        }
        let p = &self.perturbed_analysis;
        if let Some([lo, hi]) = p.gap {
            if !(lo < hi) {
                return Err(Error::Config("perturbed_analysis.gap needs lo < hi".into()));
            }
        }
        if p.resolutions.iter().any(|r| r[0] < 4 || r[1] < 4) {
            return Err(Error::Config("every resolution needs at least 4 points per axis".into()));
        }
        let l = &self.lap_scan;
        if l.levels < 4 {
            return Err(Error::Config("lap_scan.levels must be at least 4".into()));
        }
        if !(l.weight_exponent > 0.5) {
            return Err(Error::Config("lap_scan.weight_exponent must exceed 1/2".into()));
        }
        if l.spinor_component >= self.lattice.spinor_components || !(l.transverse_width > 0.0) {
            return Err(Error::Config("lap_scan needs a valid spinor_component and transverse_width > 0".into()));
        }
        if let Some(e) = l.eps0 {
            if !(e > 0.0) {
                return Err(Error::Config("lap_scan.eps0 must be positive".into()));
            }
        }
        if l.lambdas.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("lap_scan.lambdas must be finite".into()));
        }
        if let Some(pot) = &self.potential {
            pot.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialisation, lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "field": {"kind": "constant", "b0": 1.0},
        "mass": 1.0,
        "lattice": {"extents": [5.0, 5.0], "points": [8, 8], "boundary": {"kind": "dirichlet"}}
    }"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.wilson_r, 1.0);
        assert_eq!(c.f, SmoothStepF::BumpIntegral);
        assert!(c.lap_scan.lambdas.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"mass\"", "\"colour\": 1, \"mass\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn nonpositive_mass_rejected() {
        let c = RunConfig::from_json(&MINIMAL.replace("\"mass\": 1.0", "\"mass\": 0.0")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let b = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn grid_points() {
        assert_eq!(Grid { start: 0.0, stop: 1.0, count: 3 }.points(), vec![0.0, 0.5, 1.0]);
        assert!(Grid { start: 0.0, stop: 1.0, count: 0 }.points().is_empty());
    }
}
