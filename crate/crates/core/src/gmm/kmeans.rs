use rand::Rng;

use crate::rng::Rng as ChaRng;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    /// Row-major `k x d`.
    pub centers: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding on row-major `n x d` data.
///
/// A cluster that empties is re-seeded at the point farthest from its
/// current center.
pub fn kmeans(x: &[f64], d: usize, k: usize, max_iter: usize, rng: &mut ChaRng) -> KmeansResult {
    let n = x.len() / d;
    assert!(n >= 1 && k >= 1 && d >= 1);
    let row = |i: usize| &x[i * d..(i + 1) * d];

    // k-means++ seeding
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.extend_from_slice(row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(row(i), row(pick)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let xi = row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dc = sq_dist(xi, &centers[c * d..(c + 1) * d]);
                if dc < best_d {
                    best_d = dc;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in 0..d {
                    centers[c * d + s] = sums[c * d + s] / counts[c] as f64;
                }
            } else {
                let far = (0..n)
                    .map(|i| {
                        (
                            i,
                            sq_dist(row(i), &centers[labels[i] * d..(labels[i] + 1) * d]),
                        )
                    })
                    .fold((0, -1.0), |b, (i, v)| if v > b.1 { (i, v) } else { b })
                    .0;
                let p = row(far).to_vec();
                centers[c * d..(c + 1) * d].copy_from_slice(&p);
            }
        }
    }
    KmeansResult {
        labels,
        centers,
        iterations,
    }
}
