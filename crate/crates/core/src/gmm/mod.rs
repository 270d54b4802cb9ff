//! Gaussian mixtures on an `n x D` embedding whose first `d` coordinates are
//! unconstrained per component and whose remaining `D - d` coordinates are
//! zero-mean with spherical variance `sigma2_k`.
//!
//! With `d == D` the model is the ordinary full-covariance mixture, which is
//! how the unconstrained fits used by the selection algorithms are obtained.

mod density;
mod em;
mod kernels;
mod kmeans;
mod params;
mod sample;

pub use density::{log_densities, log_density, loglik, map_labels, responsibilities, Prepared};
pub use em::{
    em_fit, em_fit_from, expected_complete_loglik, m_step, EmData, EmOptions, FitResult, FitStatus,
    Responsibilities,
};
pub use kmeans::{kmeans, KmeansResult};
pub use params::{Component, ConstrainedGmmParams};
pub use sample::sample_model;

use crate::error::{Error, Result};

/// Number of free parameters of the model at `(d, K)` in `D` dimensions.
///
/// `(K - 1)` weights, `K d` means, `K d (d + 1) / 2` covariance entries and,
/// when `d < D`, one redundant variance per component.
pub fn param_count(d: usize, k: usize, dim: usize) -> Result<usize> {
    if d == 0 || d > dim || k == 0 {
        return Err(Error::param(format!(
            "parameter count needs 1 <= d <= D and K >= 1 (got d={d}, K={k}, D={dim})"
        )));
    }
    let sigma = if d < dim { k } else { 0 };
    Ok((k - 1) + k * d + k * d * (d + 1) / 2 + sigma)
}

/// `2 * loglik - eta * ln(n)`.
pub fn bic_value(loglik: f64, eta: usize, n: usize) -> f64 {
    2.0 * loglik - eta as f64 * (n as f64).ln()
}

/// Recomputes the BIC of `fit` on `z`. Degenerate fits give `-inf`.
pub fn bic(z: &nalgebra::DMatrix<f64>, fit: &FitResult) -> Result<f64> {
    match &fit.params {
        Some(theta) if fit.status == FitStatus::Ok => {
            let ll = loglik(z, theta)?;
            let eta = param_count(theta.d(), theta.k(), theta.dim())?;
            Ok(bic_value(ll, eta, z.nrows()))
        }
        _ => Ok(f64::NEG_INFINITY),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(2, 2, 8).unwrap(), 13);
        assert_eq!(param_count(1, 1, 1).unwrap(), 2);
        assert_eq!(param_count(3, 2, 3).unwrap(), 19);
        assert!(param_count(0, 1, 3).is_err());
        assert!(param_count(4, 1, 3).is_err());
        assert!(param_count(1, 0, 3).is_err());
    }
}
