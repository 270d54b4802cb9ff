//! Sequential baseline: choose the dimension at a scree-plot elbow located
//! by profile likelihood, then choose `K` by BIC on the truncated embedding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::selection::{gmm_bic, grid_from_row, Method, SelectionOptions, SelectionResult};
use crate::spectral::extended_ase;

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowResult {
    /// 1-based elbow positions in the input: elbow `q` means the first `q`
    /// values form the leading group.
    pub elbows: Vec<usize>,
    /// Profile log-likelihood of every split `q = 1..m-1` of the full input.
    pub profile: Vec<f64>,
}

/// Profile log-likelihood of splitting `values` after position `q`, with
/// separate means and a pooled (biased) variance.
pub fn profile_loglik(values: &[f64], q: usize) -> f64 {
    let m = values.len();
    let (head, tail) = values.split_at(q);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m1, m2) = (mean(head), mean(tail));
    let ss: f64 = head.iter().map(|v| (v - m1).powi(2)).sum::<f64>()
        + tail.iter().map(|v| (v - m2).powi(2)).sum::<f64>();
    let var = ss / m as f64;
    if var <= 0.0 {
        return f64::INFINITY;
    }
    -0.5 * m as f64 * ((2.0 * std::f64::consts::PI * var).ln() + 1.0)
}

/// Index of the best split of `values` (ties to the smallest `q`) and the
/// profile over all splits.
fn best_split(values: &[f64]) -> (usize, Vec<f64>) {
    let profile: Vec<f64> = (1..values.len())
        .map(|q| profile_loglik(values, q))
        .collect();
    let mut best = 0;
    for (i, &p) in profile.iter().enumerate() {
        if p > profile[best] {
            best = i;
        }
    }
    (best + 1, profile)
}

/// First `ell` elbows of a nonincreasing sequence. Each later elbow is found
/// on the values following the previous one.
pub fn zg_elbow(values: &[f64], ell: usize) -> Result<ElbowResult> {
    if values.len() < 2 {
        return Err(Error::param("elbow detection needs at least two values"));
    }
    if ell == 0 {
        return Err(Error::param("number of elbows must be at least 1"));
    }
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::param("values must be nonincreasing"));
    }
    let (first, profile) = best_split(values);
    let mut elbows = vec![first];
    while elbows.len() < ell {
        let offset = *elbows.last().expect("non-empty");
        let tail = &values[offset..];
        if tail.len() < 2 {
            return Err(Error::param(format!(
                "only {} elbow(s) available in {} values, {ell} requested",
                elbows.len(),
                values.len()
            )));
        }
        elbows.push(offset + best_split(tail).0);
    }
    Ok(ElbowResult { elbows, profile })
}

/// Baseline on an existing embedding with its eigenvalues.
pub fn seq_bic_zg_embedding(
    z: &DMatrix<f64>,
    eigenvalues: &[f64],
    ell: usize,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    let elbow = zg_elbow(eigenvalues, ell)?;
    let d_hat = elbow.elbows[ell - 1];
    let x = z.columns(0, d_hat).into_owned();
    let g = gmm_bic(&x, k_max, opts)?;
    let grid = grid_from_row(z.ncols(), k_max, d_hat, &g.fits);
    Ok(SelectionResult {
        method: Method::BicZg(ell),
        d_hat,
        k_hat: g.k_hat,
        labels: g.labels,
        grid,
    })
}

pub fn seq_bic_zg(
    a: &AdjacencyMatrix,
    dim: usize,
    ell: usize,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    if k_max == 0 {
        return Err(Error::param("K_max must be at least 1"));
    }
    let emb = extended_ase(a, dim)?;
    seq_bic_zg_embedding(emb.z(), emb.eigenvalues(), ell, k_max, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_first_value() {
        assert_eq!(
            zg_elbow(&[10.0, 1.0, 1.0, 1.0, 1.0], 1).unwrap().elbows,
            vec![1]
        );
    }

    #[test]
    fn two_leading_values() {
        assert_eq!(
            zg_elbow(&[10.0, 9.0, 1.0, 1.0, 1.0, 1.0], 1)
                .unwrap()
                .elbows,
            vec![2]
        );
    }

    #[test]
    fn affine_invariance() {
        let v = [9.0, 7.5, 7.0, 3.0, 2.9, 2.5, 1.0, 0.7, 0.2];
        let w: Vec<f64> = v.iter().map(|x| 3.0 * x - 4.0).collect();
        assert_eq!(
            zg_elbow(&v, 3).unwrap().elbows,
            zg_elbow(&w, 3).unwrap().elbows
        );
    }

    #[test]
    fn errors() {
        assert!(zg_elbow(&[1.0], 1).is_err());
        assert!(zg_elbow(&[1.0, 2.0], 1).is_err());
        assert!(zg_elbow(&[3.0, 2.0, 1.0], 0).is_err());
        // first elbow at 2 leaves a single value
        assert!(zg_elbow(&[3.0, 2.9, 1.0], 2).is_err());
    }
}
