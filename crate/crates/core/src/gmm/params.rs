use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Deserialize;

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    /// Informative mean, length `d`. The redundant mean is identically zero.
    pub mean: DVector<f64>,
    /// `d x d` informative covariance.
    pub covariance: DMatrix<f64>,
    /// Redundant variance; `None` exactly when `d == D`.
    pub sigma2: Option<f64>,
}

/// Parameters of the constrained mixture at a given `(d, K)` in `D`
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedGmmParams {
    d: usize,
    dim: usize,
    components: Vec<Component>,
}

impl ConstrainedGmmParams {
    /// Validates and builds a parameter set. `sigma2_floor` is the smallest
    /// redundant variance accepted.
    pub fn new(
        d: usize,
        dim: usize,
        components: Vec<Component>,
        sigma2_floor: f64,
    ) -> Result<Self> {
        if d == 0 || d > dim {
            return Err(Error::param(format!(
                "need 1 <= d <= D, got d={d}, D={dim}"
            )));
        }
        if components.is_empty() {
            return Err(Error::param("at least one component is required"));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight > 0.0) {
                return Err(Error::param(format!(
                    "weight of component {k} is {}",
                    c.weight
                )));
            }
            total += c.weight;
            if c.mean.len() != d || c.covariance.shape() != (d, d) {
                return Err(Error::param(format!(
                    "component {k} has wrong informative dimension"
                )));
            }
            check_psd(&c.covariance).map_err(|m| Error::param(format!("component {k}: {m}")))?;
            match (c.sigma2, d < dim) {
                (Some(s), true) if s >= sigma2_floor && s.is_finite() => {}
                (Some(s), true) => {
                    return Err(Error::param(format!(
                        "component {k}: redundant variance {s} below floor {sigma2_floor}"
                    )))
                }
                (None, false) => {}
                (None, true) => {
                    return Err(Error::param(format!(
                        "component {k}: missing redundant variance"
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::param(format!(
                        "component {k}: redundant variance given but d == D"
                    )))
                }
            }
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::param(format!("weights sum to {total}")));
        }
        Ok(Self { d, dim, components })
    }

    pub(crate) fn new_unchecked(d: usize, dim: usize, components: Vec<Component>) -> Self {
        Self { d, dim, components }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Full `D`-dimensional mean of component `k`.
    pub fn full_mean(&self, k: usize) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        m.rows_mut(0, self.d).copy_from(&self.components[k].mean);
        m
    }

    /// Full block-diagonal `D x D` covariance of component `k`.
    pub fn full_covariance(&self, k: usize) -> DMatrix<f64> {
        let c = &self.components[k];
        let mut s = DMatrix::zeros(self.dim, self.dim);
        s.view_mut((0, 0), (self.d, self.d))
            .copy_from(&c.covariance);
        if let Some(s2) = c.sigma2 {
            for i in self.d..self.dim {
                s[(i, i)] = s2;
            }
        }
        s
    }

    /// Text serialization with every number printed to 17 significant
    /// digits. The output is JSON.
    pub fn to_text(&self) -> String {
        let num = |v: f64| format!("{v:.16e}");
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"d\": {},", self.d);
        let _ = writeln!(out, "  \"dim\": {},", self.dim);
        let _ = writeln!(out, "  \"components\": [");
        for (k, c) in self.components.iter().enumerate() {
            let mean: Vec<String> = c.mean.iter().map(|&v| num(v)).collect();
            let rows: Vec<String> = c
                .covariance
                .row_iter()
                .map(|r| {
                    format!(
                        "[{}]",
                        r.iter().map(|&v| num(v)).collect::<Vec<_>>().join(", ")
                    )
                })
                .collect();
            let sigma2 = c.sigma2.map_or_else(|| "null".to_string(), num);
            let _ = writeln!(out, "    {{");
            let _ = writeln!(out, "      \"weight\": {},", num(c.weight));
            let _ = writeln!(out, "      \"mean\": [{}],", mean.join(", "));
            let _ = writeln!(out, "      \"covariance\": [{}],", rows.join(", "));
            let _ = writeln!(out, "      \"sigma2\": {sigma2}");
            let sep = if k + 1 < self.components.len() {
                ","
            } else {
                ""
            };
            let _ = writeln!(out, "    }}{sep}");
        }
        let _ = writeln!(out, "  ]");
        let _ = writeln!(out, "}}");
        out
    }

    /// Parses the output of [`to_text`](Self::to_text). Weights are checked
    /// to the same tolerance as in [`new`](Self::new).
    pub fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct RawComponent {
            weight: f64,
            mean: Vec<f64>,
            covariance: Vec<Vec<f64>>,
            sigma2: Option<f64>,
        }
        #[derive(Deserialize)]
        struct Raw {
            d: usize,
            dim: usize,
            components: Vec<RawComponent>,
        }
        let raw: Raw = serde_json::from_str(text)
            .map_err(|e| Error::param(format!("malformed parameter file: {e}")))?;
        let d = raw.d;
        let components = raw
            .components
            .into_iter()
            .map(|c| {
                if c.covariance.len() != d || c.covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::param("covariance has wrong shape"));
                }
                Ok(Component {
                    weight: c.weight,
                    mean: DVector::from_vec(c.mean),
                    covariance: DMatrix::from_fn(d, d, |i, j| c.covariance[i][j]),
                    sigma2: c.sigma2,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, raw.dim, components, 0.0)
    }
}

fn check_psd(s: &DMatrix<f64>) -> std::result::Result<(), String> {
    let scale = s.amax().max(1.0);
    for i in 0..s.nrows() {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * scale {
                return Err("covariance is not symmetric".into());
            }
        }
    }
    let min = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(format!("covariance has negative eigenvalue {min}"));
    }
    Ok(())
}
