use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernels::mahalanobis;
use super::params::ConstrainedGmmParams;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-component quantities needed to evaluate the density quickly.
#[derive(Debug, Clone)]
pub struct Prepared {
    d: usize,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Lower Cholesky factors, row-major `d x d`.
    chol: Vec<Vec<f64>>,
    /// `d ln(2 pi) + ln det`.
    informative_const: Vec<f64>,
    /// `(D - d) ln(2 pi sigma2)`, zero when `d == D`.
    redundant_const: Vec<f64>,
    inv_sigma2: Vec<f64>,
}

impl Prepared {
    pub fn new(theta: &ConstrainedGmmParams) -> Result<Self> {
        let d = theta.d();
        let dim = theta.dim();
        let r = (dim - d) as f64;
        let mut out = Self {
            d,
            log_weights: Vec::with_capacity(theta.k()),
            means: Vec::with_capacity(theta.k()),
            chol: Vec::with_capacity(theta.k()),
            informative_const: Vec::with_capacity(theta.k()),
            redundant_const: Vec::with_capacity(theta.k()),
            inv_sigma2: Vec::with_capacity(theta.k()),
        };
        for (k, c) in theta.components().iter().enumerate() {
            let l = Cholesky::<f64, Dyn>::new(c.covariance.clone())
                .ok_or_else(|| {
                    Error::Numeric(format!(
                        "informative covariance of component {k} is singular"
                    ))
                })?
                .unpack();
            let logdet: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            if !logdet.is_finite() {
                return Err(Error::Numeric(format!(
                    "informative covariance of component {k} is singular"
                )));
            }
            let mut flat = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..=i {
                    flat[i * d + j] = l[(i, j)];
                }
            }
            out.log_weights.push(c.weight.ln());
            out.means.push(c.mean.iter().copied().collect());
            out.chol.push(flat);
            out.informative_const.push(d as f64 * LN_2PI + logdet);
            match c.sigma2 {
                Some(s2) => {
                    out.redundant_const.push(r * (LN_2PI + s2.ln()));
                    out.inv_sigma2.push(1.0 / s2);
                }
                None => {
                    out.redundant_const.push(0.0);
                    out.inv_sigma2.push(0.0);
                }
            }
        }
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.log_weights.len()
    }

    /// `ln pi_k + ln phi(z; mu_k, Sigma_k)` given the informative coordinates
    /// `x` and the squared norm `y2` of the redundant coordinates.
    #[inline]
    pub fn weighted_component_log_density(
        &self,
        k: usize,
        x: &[f64],
        y2: f64,
        scratch: &mut [f64],
    ) -> f64 {
        let quad = mahalanobis(self.d, &self.chol[k], &self.means[k], x, scratch);
        self.log_weights[k]
            - 0.5 * (self.informative_const[k] + quad)
            - 0.5 * (self.redundant_const[k] + y2 * self.inv_sigma2[k])
    }

    /// Fills `out` with weighted component log-densities and returns their
    /// log-sum-exp.
    #[inline]
    pub fn row_log_terms(&self, x: &[f64], y2: f64, out: &mut [f64], scratch: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.k() {
            let v = self.weighted_component_log_density(k, x, y2, scratch);
            out[k] = v;
            if v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let s: f64 = out.iter().map(|&v| (v - max).exp()).sum();
        max + s.ln()
    }

    /// Like [`Self::row_log_terms`] but leaves the posterior probabilities in
    /// `out`, computing each exponential once.
    #[inline]
    pub fn row_posterior(&self, x: &[f64], y2: f64, out: &mut [f64], scratch: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.k() {
            let v = self.weighted_component_log_density(k, x, y2, scratch);
            out[k] = v;
            if v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        let inv = 1.0 / s;
        for v in out.iter_mut() {
            *v *= inv;
        }
        max + s.ln()
    }
}

fn check_dim(z_cols: usize, theta: &ConstrainedGmmParams) -> Result<()> {
    if z_cols != theta.dim() {
        return Err(Error::param(format!(
            "data has {z_cols} columns but the model is {}-dimensional",
            theta.dim()
        )));
    }
    Ok(())
}

/// Row-wise iteration helper: informative coordinates and redundant squared
/// norm of each row.
fn for_each_row(z: &DMatrix<f64>, d: usize, mut f: impl FnMut(usize, &[f64], f64)) {
    let mut x = vec![0.0; d];
    for i in 0..z.nrows() {
        for (s, xs) in x.iter_mut().enumerate() {
            *xs = z[(i, s)];
        }
        let y2: f64 = (d..z.ncols()).map(|s| z[(i, s)] * z[(i, s)]).sum();
        f(i, &x, y2);
    }
}

/// Log-density of one `D`-dimensional point.
pub fn log_density(z: &DVector<f64>, theta: &ConstrainedGmmParams) -> Result<f64> {
    check_dim(z.len(), theta)?;
    let prep = Prepared::new(theta)?;
    let d = theta.d();
    let y2: f64 = z.rows(d, z.len() - d).norm_squared();
    let mut terms = vec![0.0; theta.k()];
    let mut scratch = vec![0.0; d];
    Ok(prep.row_log_terms(&z.as_slice()[..d], y2, &mut terms, &mut scratch))
}

/// Log-density of every row of `z`.
pub fn log_densities(z: &DMatrix<f64>, theta: &ConstrainedGmmParams) -> Result<Vec<f64>> {
    check_dim(z.ncols(), theta)?;
    let prep = Prepared::new(theta)?;
    let mut out = vec![0.0; z.nrows()];
    let mut terms = vec![0.0; theta.k()];
    let mut scratch = vec![0.0; theta.d()];
    for_each_row(z, theta.d(), |i, x, y2| {
        out[i] = prep.row_log_terms(x, y2, &mut terms, &mut scratch);
    });
    Ok(out)
}

/// Total log-likelihood, summed with compensation.
pub fn loglik(z: &DMatrix<f64>, theta: &ConstrainedGmmParams) -> Result<f64> {
    Ok(neumaier_sum(log_densities(z, theta)?))
}

pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Posterior component probabilities, `n x K`.
pub fn responsibilities(z: &DMatrix<f64>, theta: &ConstrainedGmmParams) -> Result<DMatrix<f64>> {
    check_dim(z.ncols(), theta)?;
    let prep = Prepared::new(theta)?;
    let k = theta.k();
    let mut r = DMatrix::zeros(z.nrows(), k);
    let mut terms = vec![0.0; k];
    let mut scratch = vec![0.0; theta.d()];
    for_each_row(z, theta.d(), |i, x, y2| {
        let lse = prep.row_log_terms(x, y2, &mut terms, &mut scratch);
        for (j, &t) in terms.iter().enumerate() {
            r[(i, j)] = (t - lse).exp();
        }
    });
    Ok(r)
}

/// Maximum a posteriori component of each row; ties go to the smallest
/// index.
pub fn map_labels(z: &DMatrix<f64>, theta: &ConstrainedGmmParams) -> Result<Vec<usize>> {
    check_dim(z.ncols(), theta)?;
    let prep = Prepared::new(theta)?;
    let mut labels = vec![0; z.nrows()];
    let mut terms = vec![0.0; theta.k()];
    let mut scratch = vec![0.0; theta.d()];
    for_each_row(z, theta.d(), |i, x, y2| {
        prep.row_log_terms(x, y2, &mut terms, &mut scratch);
        labels[i] = argmax_first(&terms);
    });
    Ok(labels)
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Component;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn standard(d: usize, dim: usize) -> ConstrainedGmmParams {
        ConstrainedGmmParams::new(
            d,
            dim,
            vec![Component {
                weight: 1.0,
                mean: DVector::zeros(d),
                covariance: DMatrix::identity(d, d),
                sigma2: (d < dim).then_some(1.0),
            }],
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_at_origin() {
        let v = log_density(&DVector::zeros(2), &standard(1, 2)).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn duplicated_component_collapses() {
        let one = standard(2, 3);
        let mut c = one.components()[0].clone();
        c.weight = 0.5;
        let two = ConstrainedGmmParams::new(2, 3, vec![c.clone(), c], 1e-12).unwrap();
        let z = DVector::from_vec(vec![0.3, -1.2, 0.8]);
        let a = log_density(&z, &one).unwrap();
        let b = log_density(&z, &two).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    /// Independent evaluation: assemble each full covariance, invert it with
    /// an LU decomposition and sum densities directly.
    fn dense_oracle(z: &DVector<f64>, theta: &ConstrainedGmmParams) -> f64 {
        let dim = theta.dim() as f64;
        let mut total = 0.0;
        for k in 0..theta.k() {
            let s = theta.full_covariance(k);
            let mu = theta.full_mean(k);
            let diff = z - mu;
            let lu = s.clone().lu();
            let inv = lu.try_inverse().unwrap();
            let det = s.determinant();
            let q = (diff.transpose() * inv * &diff)[(0, 0)];
            total += theta.components()[k].weight * (-0.5 * q).exp()
                / ((2.0 * PI).powf(dim / 2.0) * det.sqrt());
        }
        total.ln()
    }

    #[test]
    fn matches_dense_covariance_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..50 {
            let dim = rng.random_range(1..=5);
            let d = rng.random_range(1..=dim);
            let k = rng.random_range(1..=3);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let tot: f64 = raw.iter().sum();
            let comps = raw
                .iter()
                .map(|w| {
                    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                    let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.3;
                    Component {
                        weight: w / tot,
                        mean: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
                        covariance: cov,
                        sigma2: (d < dim).then(|| rng.random_range(0.3..2.0)),
                    }
                })
                .collect::<Vec<_>>();
            // renormalise exactly
            let mut comps = comps;
            let s: f64 = comps.iter().map(|c| c.weight).sum();
            comps.last_mut().unwrap().weight += 1.0 - s;
            let theta = ConstrainedGmmParams::new(d, dim, comps, 1e-12).unwrap();
            let z = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
            let fast = log_density(&z, &theta).unwrap();
            let slow = dense_oracle(&z, &theta);
            assert!(
                (fast - slow).abs() < 1e-10,
                "trial {trial}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn map_rule() {
        let theta = standard(1, 1);
        let z = DMatrix::from_row_slice(3, 1, &[0.0, 5.0, -2.0]);
        assert_eq!(map_labels(&z, &theta).unwrap(), vec![0, 0, 0]);

        let comp = |m: f64| Component {
            weight: 0.5,
            mean: DVector::from_vec(vec![m]),
            covariance: DMatrix::identity(1, 1),
            sigma2: Some(1.0),
        };
        let theta = ConstrainedGmmParams::new(1, 2, vec![comp(-2.0), comp(2.0)], 1e-12).unwrap();
        let z = DMatrix::from_row_slice(3, 2, &[-0.5, 1.0, 0.5, 0.0, 0.0, 0.0]);
        // exact tie at 0 goes to the first component
        assert_eq!(map_labels(&z, &theta).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn map_matches_brute_force_posterior() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let comps = (0..3)
            .map(|k| Component {
                weight: [0.2, 0.3, 0.5][k],
                mean: DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)),
                covariance: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5 + k as f64 * 0.2]),
                sigma2: Some(0.5 + k as f64),
            })
            .collect();
        let theta = ConstrainedGmmParams::new(2, 4, comps, 1e-12).unwrap();
        let z = DMatrix::from_fn(50, 4, |_, _| rng.random_range(-3.0..3.0));
        let labels = map_labels(&z, &theta).unwrap();
        for i in 0..50 {
            let zi = z.row(i).transpose();
            let post: Vec<f64> = (0..3)
                .map(|k| {
                    let s = theta.full_covariance(k);
                    let diff = &zi - theta.full_mean(k);
                    let q = (diff.transpose() * s.clone().try_inverse().unwrap() * &diff)[(0, 0)];
                    theta.components()[k].weight * (-0.5 * q).exp() / s.determinant().sqrt()
                })
                .collect();
            let best = (0..3).fold(0, |b, k| if post[k] > post[b] { k } else { b });
            assert_eq!(labels[i], best, "row {i}");
        }
        let r = responsibilities(&z, &theta).unwrap();
        for row in r.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let theta = standard(1, 2);
        assert!(log_density(&DVector::zeros(3), &theta).is_err());
        assert!(map_labels(&DMatrix::zeros(2, 1), &theta).is_err());
    }

    #[test]
    fn compensated_sum() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
