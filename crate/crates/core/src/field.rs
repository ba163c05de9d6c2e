//! Magnetic fields `B(x₁, x₂)` along the third axis and their
//! transversal-gauge vector potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, integrate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        b0: f64,
    },
    /// `amplitude * Σ_k cos(k·x)`
    Periodic {
        amplitude: f64,
        wave_vectors: Vec<[f64; 2]>,
    },
    /// `c * |x|^p`
    RadialPower {
        c: f64,
        p: f64,
    },
    /// Samples `values[i][j] = B(x[i], y[j])` on a rectangular grid,
    /// bilinear in between.
    Tabulated {
        x: Vec<f64>,
        y: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldSpec::Constant { b0 } if !b0.is_finite() => Err(Error::Config("field b0 must be finite".into())),
            FieldSpec::RadialPower { p, c } if !(*p >= 0.0) || !c.is_finite() => {
                Err(Error::Config("radial_power needs finite c and p >= 0".into()))
            }
            FieldSpec::Tabulated { x, y, values } => {
                let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[0] < w[1]);
                if !increasing(x) || !increasing(y) {
                    return Err(Error::Config("tabulated axes must be strictly increasing with >= 2 points".into()));
                }
                if values.len() != x.len() || values.iter().any(|row| row.len() != y.len()) {
                    return Err(Error::Config("tabulated values do not form a complete grid".into()));
                }
                if values.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Config("tabulated values must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn constant_strength(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant { b0 } => Some(*b0),
            _ => None,
        }
    }
}

fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if !(v >= axis[0] && v <= axis[n - 1]) {
        return None;
    }
    let i = match axis.partition_point(|&a| a <= v) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    Some((i, (v - axis[i]) / (axis[i + 1] - axis[i])))
}

pub fn evaluate_field(spec: &FieldSpec, x: [f64; 2]) -> Result<f64> {
    Ok(match spec {
        FieldSpec::Constant { b0 } => *b0,
        FieldSpec::Periodic { amplitude, wave_vectors } => {
            amplitude * wave_vectors.iter().map(|k| (k[0] * x[0] + k[1] * x[1]).cos()).sum::<f64>()
        }
        FieldSpec::RadialPower { c, p } => c * x[0].hypot(x[1]).powf(*p),
        FieldSpec::Tabulated { x: xs, y: ys, values } => {
            let out = || Error::OutOfTable { x: x[0], y: x[1] };
            let (i, tx) = locate(xs, x[0]).ok_or_else(out)?;
            let (j, ty) = locate(ys, x[1]).ok_or_else(out)?;
            (1.0 - tx) * (1.0 - ty) * values[i][j]
                + tx * (1.0 - ty) * values[i + 1][j]
                + (1.0 - tx) * ty * values[i][j + 1]
                + tx * ty * values[i + 1][j + 1]
        }
    })
}

pub const DEFAULT_QUADRATURE_ORDER: usize = 32;

/// Transversal-gauge potential `a = (−x₂, x₁)·∫₀¹ s B(sx) ds`, `a₃ = 0`.
#[derive(Clone, Debug)]
pub struct GaugeField {
    pub spec: FieldSpec,
    pub quadrature_order: usize,
    rule: (Vec<f64>, Vec<f64>),
    rule_doubled: (Vec<f64>, Vec<f64>),
    link_rule: (Vec<f64>, Vec<f64>),
}

impl GaugeField {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        Self::with_order(spec, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn with_order(spec: FieldSpec, quadrature_order: usize) -> Result<Self> {
        spec.validate()?;
        if quadrature_order == 0 {
            return Err(Error::InvalidArgument("quadrature order must be positive".into()));
        }
        Ok(GaugeField {
            spec,
            quadrature_order,
            rule: gauss_legendre(quadrature_order),
            rule_doubled: gauss_legendre(2 * quadrature_order),
            link_rule: gauss_legendre(8),
        })
    }

    /// `∫₀¹ s B(sx) ds` with the given rule; tabulated fields are integrated
    /// piecewise between grid-line crossings, where the integrand is a cubic.
    fn radial_moment(&self, x: [f64; 2], rule: &(Vec<f64>, Vec<f64>)) -> Result<f64> {
        match &self.spec {
            FieldSpec::Constant { b0 } => Ok(0.5 * b0),
            FieldSpec::RadialPower { c, p } => Ok(c * x[0].hypot(x[1]).powf(*p) / (p + 2.0)),
            FieldSpec::Tabulated { x: xs, y: ys, .. } => {
                let mut cuts = vec![0.0, 1.0];
                for (axis, comp) in [(xs, 0usize), (ys, 1usize)] {
                    if x[comp] != 0.0 {
                        cuts.extend(axis.iter().map(|g| g / x[comp]).filter(|s| *s > 0.0 && *s < 1.0));
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let gl4 = gauss_legendre(4);
                let mut total = 0.0;
                let mut err = None;
                for w in cuts.windows(2) {
                    total += integrate(
                        |s| match evaluate_field(&self.spec, [s * x[0], s * x[1]]) {
                            Ok(b) => s * b,
                            Err(e) => {
                                err.get_or_insert(e);
                                0.0
                            }
                        },
                        w[0],
                        w[1],
                        &gl4,
                    );
                }
                match err {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            }
            FieldSpec::Periodic { .. } => {
                Ok(integrate(|s| s * evaluate_field(&self.spec, [s * x[0], s * x[1]]).unwrap(), 0.0, 1.0, rule))
            }
        }
    }

    /// `(a₁, a₂)` at `x`, without the convergence check.
    pub fn potential(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let g = self.radial_moment(x, &self.rule)?;
        Ok([-x[1] * g, x[0] * g])
    }

    /// Line integral `∫ a·dl` along the straight segment `x → y`.
    pub fn link_integral(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let d = [y[0] - x[0], y[1] - x[1]];
        if let Some(b0) = self.spec.constant_strength() {
            // Linear potential: the midpoint rule is exact.
            let m = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
            return Ok(0.5 * b0 * (-m[1] * d[0] + m[0] * d[1]));
        }
        let mut err = None;
        let v = integrate(
            |t| match self.potential([x[0] + t * d[0], x[1] + t * d[1]]) {
                Ok(a) => a[0] * d[0] + a[1] * d[1],
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            1.0,
            &self.link_rule,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// Transversal gauge at `x` with the default quadrature order, checked
/// against the doubled order.
pub fn transversal_gauge(spec: &FieldSpec, x: [f64; 2]) -> Result<[f64; 2]> {
    GaugeField::new(spec.clone())?.checked_potential(x)
}

impl GaugeField {
    pub fn checked_potential(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let g = self.radial_moment(x, &self.rule)?;
        if matches!(self.spec, FieldSpec::Periodic { .. }) {
            let g2 = self.radial_moment(x, &self.rule_doubled)?;
            let gap = (g - g2).abs();
            if gap > 1e-10 * (1.0 + g2.abs()) {
                return Err(Error::QuadratureNonConvergence { x: x[0], y: x[1], gap });
            }
        }
        Ok([-x[1] * g, x[0] * g])
    }
}

/// Max over probes of `|(∂₁a₂ − ∂₂a₁)(x) − B(x)|` by central differences.
pub fn curl_residual(gauge: &GaugeField, spec: &FieldSpec, probes: &[[f64; 2]], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("difference step must be positive".into()));
    }
    let mut worst = 0.0f64;
    for &p in probes {
        let a2p = gauge.potential([p[0] + h, p[1]])?[1];
        let a2m = gauge.potential([p[0] - h, p[1]])?[1];
        let a1p = gauge.potential([p[0], p[1] + h])?[0];
        let a1m = gauge.potential([p[0], p[1] - h])?[0];
        let curl = (a2p - a2m) / (2.0 * h) - (a1p - a1m) / (2.0 * h);
        worst = worst.max((curl - evaluate_field(spec, p)?).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn field_examples() {
        assert_eq!(evaluate_field(&FieldSpec::Constant { b0: 1.0 }, [3.0, -7.0]).unwrap(), 1.0);
        let rp = FieldSpec::RadialPower { c: 1.0, p: 2.0 };
        assert!((evaluate_field(&rp, [1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        let per = FieldSpec::Periodic { amplitude: 1.0, wave_vectors: vec![[2.0 * PI, 0.0]] };
        assert!(evaluate_field(&per, [0.25, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gauge_examples() {
        let a = transversal_gauge(&FieldSpec::Constant { b0: 1.0 }, [1.0, 2.0]).unwrap();
        assert_eq!(a, [-1.0, 0.5]);
        let rp = FieldSpec::RadialPower { c: 1.0, p: 2.0 };
        let a = transversal_gauge(&rp, [1.0, 0.0]).unwrap();
        assert!(a[0].abs() < 1e-15 && (a[1] - 0.25).abs() < 1e-15);
        let per = FieldSpec::Periodic { amplitude: 0.7, wave_vectors: vec![[1.0, 2.0]] };
        assert_eq!(transversal_gauge(&per, [0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn tabulated_bounds_and_interpolation() {
        let t = FieldSpec::Tabulated {
            x: vec![-1.0, 0.0, 1.0],
            y: vec![-1.0, 1.0],
            values: vec![vec![0.0, 2.0], vec![1.0, 3.0], vec![2.0, 4.0]],
        };
        assert!((evaluate_field(&t, [0.5, 0.0]).unwrap() - 2.5).abs() < 1e-15);
        assert!(matches!(evaluate_field(&t, [1.5, 0.0]), Err(Error::OutOfTable { .. })));
        let ragged = FieldSpec::Tabulated { x: vec![0.0, 1.0], y: vec![0.0, 1.0], values: vec![vec![0.0, 1.0], vec![0.0]] };
        assert!(ragged.validate().is_err());
    }

    #[test]
    fn constant_link_integral_is_exact() {
        let g = GaugeField::new(FieldSpec::Constant { b0: 2.0 }).unwrap();
        let v = g.link_integral([0.3, -0.2], [0.5, -0.2]).unwrap();
        // a₁ = −B x₂/2 = 0.2, length 0.2
        assert!((v - 0.04).abs() < 1e-16);
    }
}
