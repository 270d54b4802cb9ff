use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;

use super::params::ConstrainedGmmParams;
use crate::error::{Error, Result};
use crate::rng::{derived_rng, purpose};

/// Draws `n` i.i.d. rows from `theta`. Returns the component labels and the
/// `n x D` sample.
pub fn sample_model(
    theta: &ConstrainedGmmParams,
    n: usize,
    seed: u64,
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (d, dim) = (theta.d(), theta.dim());
    let pick = WeightedIndex::new(theta.weights())
        .map_err(|e| Error::param(format!("invalid mixture weights: {e}")))?;
    // symmetric square roots tolerate semidefinite covariances
    let roots: Vec<DMatrix<f64>> = theta
        .components()
        .iter()
        .map(|c| {
            let eig = SymmetricEigen::new(c.covariance.clone());
            let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose()
        })
        .collect();
    let mut rng = derived_rng(seed, &[purpose::MODEL_SAMPLE]);
    let mut labels = Vec::with_capacity(n);
    let mut z = DMatrix::zeros(n, dim);
    let mut e = DVector::zeros(d);
    for i in 0..n {
        let k = pick.sample(&mut rng);
        labels.push(k);
        let c = &theta.components()[k];
        for v in e.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let x = &c.mean + &roots[k] * &e;
        for s in 0..d {
            z[(i, s)] = x[s];
        }
        let sd = c.sigma2.unwrap_or(0.0).sqrt();
        for s in d..dim {
            let g: f64 = StandardNormal.sample(&mut rng);
            z[(i, s)] = sd * g;
        }
    }
    Ok((labels, z))
}
