#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sms_core::rng::{rng_from_seed, Rng as ChaCha};

pub fn rng(seed: u64) -> ChaCha {
    rng_from_seed(seed)
}

pub fn normal(rng: &mut ChaCha) -> f64 {
    rng.sample(StandardNormal)
}

/// `n x dim` sample from `k` spherical clusters with random centres.
pub fn clustered_data(
    n: usize,
    dim: usize,
    k: usize,
    spread: f64,
    rng: &mut ChaCha,
) -> DMatrix<f64> {
    let centres: Vec<DVector<f64>> = (0..k)
        .map(|_| DVector::from_fn(dim, |_, _| spread * normal(rng)))
        .collect();
    DMatrix::from_fn(n, dim, |i, s| centres[i % k][s] + normal(rng))
}

/// Minimises `f` with Nelder-Mead, restarting from the best vertex until a
/// restart no longer improves the value.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64) -> Vec<f64> {
    let mut best = x0.to_vec();
    let mut best_val = f(&best);
    for _ in 0..50 {
        let (x, v) = nelder_mead_once(&f, &best, step, 20_000);
        let improved = v < best_val - 1e-15 * best_val.abs().max(1.0);
        if v < best_val {
            best = x;
            best_val = v;
        }
        if !improved {
            break;
        }
    }
    best
}

fn nelder_mead_once(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_eval: usize,
) -> (Vec<f64>, f64) {
    let m = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..m {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = m + 1;
    while evals < max_eval {
        let mut idx: Vec<usize> = (0..=m).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = (vals[m] - vals[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= 1e-16 * vals[0].abs().max(1.0) && size < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..m)
            .map(|j| simplex[..m].iter().map(|v| v[j]).sum::<f64>() / m as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[m])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = towards(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = towards(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[m] = xe;
                vals[m] = fe;
            } else {
                simplex[m] = xr;
                vals[m] = fr;
            }
        } else if fr < vals[m - 1] {
            simplex[m] = xr;
            vals[m] = fr;
        } else {
            let xc = if fr < vals[m] {
                towards(-0.5)
            } else {
                towards(0.5)
            };
            let fc = f(&xc);
            evals += 1;
            if fc < vals[m].min(fr) {
                simplex[m] = xc;
                vals[m] = fc;
            } else {
                for i in 1..=m {
                    let v: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| b + 0.5 * (a - b))
                        .collect();
                    vals[i] = f(&v);
                    simplex[i] = v;
                }
                evals += m;
            }
        }
    }
    let i = (0..=m)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("non-empty");
    (simplex[i].clone(), vals[i])
}
