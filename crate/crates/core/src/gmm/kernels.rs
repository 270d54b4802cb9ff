//! Inner loops of the density and the M-step, monomorphised for small
//! informative dimensions so the compiler can unroll them. `D == 0` selects
//! the runtime-sized fallback; every variant performs the same operations in
//! the same order, so results do not depend on which one runs.

macro_rules! dispatch {
    ($d:expr, $f:ident($($arg:expr),* $(,)?)) => {
        match $d {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            4 => $f::<4>($($arg),*),
            5 => $f::<5>($($arg),*),
            6 => $f::<6>($($arg),*),
            7 => $f::<7>($($arg),*),
            8 => $f::<8>($($arg),*),
            _ => $f::<0>($($arg),*),
        }
    };
}

/// Squared norm of `w` solving `L w = x - mu`, with `L` lower triangular and
/// row-major. `scratch` receives `w`.
#[inline]
pub(crate) fn mahalanobis(d: usize, l: &[f64], mu: &[f64], x: &[f64], scratch: &mut [f64]) -> f64 {
    dispatch!(d, mahalanobis_n(d, l, mu, x, scratch))
}

#[inline(always)]
fn mahalanobis_n<const D: usize>(d: usize, l: &[f64], mu: &[f64], x: &[f64], w: &mut [f64]) -> f64 {
    let d = if D == 0 { d } else { D };
    let (l, mu, x, w) = (&l[..d * d], &mu[..d], &x[..d], &mut w[..d]);
    let mut quad = 0.0;
    for i in 0..d {
        let mut s = x[i] - mu[i];
        for j in 0..i {
            s -= l[i * d + j] * w[j];
        }
        let v = s / l[i * d + i];
        w[i] = v;
        quad += v * v;
    }
    quad
}

/// Adds the responsibility-weighted counts, informative sums and redundant
/// squared norms of every row.
pub(crate) fn first_moments(
    d: usize,
    x: &[f64],
    y2: &[f64],
    resp: &[f64],
    k: usize,
    weight: &mut [f64],
    sums: &mut [f64],
    y2_sums: &mut [f64],
) {
    dispatch!(d, first_moments_n(d, x, y2, resp, k, weight, sums, y2_sums))
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn first_moments_n<const D: usize>(
    d: usize,
    x: &[f64],
    y2: &[f64],
    resp: &[f64],
    k: usize,
    weight: &mut [f64],
    sums: &mut [f64],
    y2_sums: &mut [f64],
) {
    let d = if D == 0 { d } else { D };
    let (weight, y2_sums, sums) = (&mut weight[..k], &mut y2_sums[..k], &mut sums[..k * d]);
    for (i, &yi) in y2.iter().enumerate() {
        let xi = &x[i * d..(i + 1) * d];
        let ri = &resp[i * k..(i + 1) * k];
        for c in 0..k {
            let w = ri[c];
            weight[c] += w;
            y2_sums[c] += w * yi;
            let m = &mut sums[c * d..(c + 1) * d];
            for s in 0..d {
                m[s] += w * xi[s];
            }
        }
    }
}

/// Adds the responsibility-weighted centred scatter of every row to the
/// lower triangles (row-major `d x d` per component) of `scatter`.
pub(crate) fn scatter(
    d: usize,
    x: &[f64],
    resp: &[f64],
    k: usize,
    means: &[f64],
    scatter: &mut [f64],
) {
    dispatch!(d, scatter_n(d, x, resp, k, means, scatter))
}

#[inline(always)]
fn scatter_n<const D: usize>(
    d: usize,
    x: &[f64],
    resp: &[f64],
    k: usize,
    means: &[f64],
    out: &mut [f64],
) {
    let d = if D == 0 { d } else { D };
    let n = resp.len() / k;
    let mut diff = vec![0.0; d];
    let diff = &mut diff[..d];
    let (means, out) = (&means[..k * d], &mut out[..k * d * d]);
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let ri = &resp[i * k..(i + 1) * k];
        for c in 0..k {
            let w = ri[c];
            if w == 0.0 {
                continue;
            }
            let mu = &means[c * d..(c + 1) * d];
            for s in 0..d {
                diff[s] = xi[s] - mu[s];
            }
            let sc = &mut out[c * d * d..(c + 1) * d * d];
            for a in 0..d {
                let wa = w * diff[a];
                for b in 0..=a {
                    sc[a * d + b] += wa * diff[b];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specialised_and_generic_agree_exactly() {
        // lower-triangular factor with a nontrivial off-diagonal pattern
        for d in 1..=9 {
            let l: Vec<f64> = (0..d * d)
                .map(|t| {
                    let (i, j) = (t / d, t % d);
                    if j > i {
                        0.0
                    } else if i == j {
                        1.0 + 0.1 * i as f64
                    } else {
                        0.3 / (1 + i + j) as f64
                    }
                })
                .collect();
            let mu: Vec<f64> = (0..d).map(|i| 0.2 * i as f64).collect();
            let x: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
            let mut w1 = vec![0.0; d];
            let mut w2 = vec![0.0; d];
            let a = mahalanobis(d, &l, &mu, &x, &mut w1);
            let b = mahalanobis_n::<0>(d, &l, &mu, &x, &mut w2);
            assert_eq!(a.to_bits(), b.to_bits());
            assert_eq!(w1, w2);
        }
    }
}
