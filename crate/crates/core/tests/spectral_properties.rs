mod common;

use common::{normal, rng};
use nalgebra::{DMatrix, SVD};
use sms_core::graph::{sample_sbm, sample_sbm_conditional, Membership, SbmParams};
use sms_core::metrics::{median, sign_test};
use sms_core::spectral::{block_stats, eig_sym, embed_symmetric, extended_ase};

#[test]
fn embedding_identities_on_sbm_graph() {
    let (_, a) = sample_sbm(400, &SbmParams::two_block(), 3).unwrap();
    let dense = a.to_dense();
    let dim = 8;
    let emb = extended_ase(&a, dim).unwrap();
    let z = emb.z();
    let gram = z.transpose() * z;
    for s in 0..dim {
        for t in 0..dim {
            let expected = if s == t { emb.eigenvalues()[s] } else { 0.0 };
            assert!(
                (gram[(s, t)] - expected).abs() <= 1e-8 * emb.eigenvalues()[0],
                "({s},{t})"
            );
        }
    }
    let eig = eig_sym(&dense, dim).unwrap();
    let u = &eig.eigenvectors;
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&eig.eigenvalues));
    let residual = (&dense * u - u * &lambda).norm();
    assert!(residual <= 1e-8 * dense.norm());
    let ortho = (u.transpose() * u - DMatrix::identity(dim, dim)).amax();
    assert!(ortho <= 1e-8);
    assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let low_rank = u * &lambda * u.transpose();
    assert!((z * z.transpose() - low_rank).amax() <= 1e-10);
}

#[test]
fn noiseless_embedding_recovers_latent_positions_up_to_rotation() {
    let mut g = rng(7);
    for d0 in 1..=3 {
        let x = DMatrix::from_fn(60, d0, |_, _| 0.3 + 0.2 * normal(&mut g).abs());
        let p = &x * x.transpose();
        let z = embed_symmetric(p, d0).unwrap().into_matrix();
        // orthogonal Procrustes: W = U V^T from the SVD of X^T Z
        let svd = SVD::new(x.transpose() * &z, true, true);
        let w = svd.u.unwrap() * svd.v_t.unwrap();
        let residual = (&x * w - &z).norm();
        assert!(residual <= 1e-8, "d0={d0}: residual {residual:e}");
    }
}

/// Median |within-block mean| and mean |off-diagonal covariance| of the
/// redundant columns, both pooled over blocks by the median.
fn redundant_summaries(n: usize, seed: u64) -> (f64, f64) {
    let params = SbmParams::two_block();
    let tau = Membership::new((0..n).map(|i| usize::from(2 * i >= n)).collect()).unwrap();
    let a = sample_sbm_conditional(&params, &tau, seed).unwrap();
    let emb = extended_ase(&a, 80).unwrap();
    let (_, y) = emb.split(2).unwrap();
    let stats = block_stats(y, &tau).unwrap();
    let means: Vec<f64> = stats
        .blocks
        .iter()
        .flat_map(|b| b.mean.iter().map(|v| v.abs()))
        .collect();
    (median(&means), median(&stats.mean_abs_off_diagonal()))
}

#[test]
fn redundant_means_shrink_and_covariance_becomes_diagonal() {
    let reps = 20;
    let small: Vec<(f64, f64)> = (0..reps)
        .map(|r| redundant_summaries(200, 500 + r))
        .collect();
    let large: Vec<(f64, f64)> = (0..reps)
        .map(|r| redundant_summaries(2000, 600 + r))
        .collect();
    let diffs: Vec<f64> = small.iter().zip(&large).map(|(s, l)| s.0 - l.0).collect();
    assert!(sign_test(&diffs).p_value < 0.05);
    let off_small = median(&small.iter().map(|s| s.1).collect::<Vec<_>>());
    let off_large = median(&large.iter().map(|s| s.1).collect::<Vec<_>>());
    assert!(off_large < 0.5 * off_small, "{off_large} vs {off_small}");
}
