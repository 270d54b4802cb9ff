//! Expectation-maximisation for the constrained mixture.
//!
//! Only two things about a row matter to the model: its informative
//! coordinates and the squared norm of its redundant coordinates. [`EmData`]
//! keeps exactly those, so an iteration costs `O(n K d^2)` regardless of `D`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use super::density::{neumaier_sum, Prepared};
use super::kernels::{first_moments, scatter};
use super::kmeans::kmeans;
use super::params::{Component, ConstrainedGmmParams};
use super::{bic_value, param_count};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Relative log-likelihood change below which a run has converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of starts: one k-means start plus `restarts - 1` random
    /// responsibility starts.
    pub restarts: usize,
    pub sigma2_floor: f64,
    /// Informative covariances get `ridge * trace / d` added to the diagonal.
    pub ridge: f64,
    pub kmeans_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            restarts: 5,
            sigma2_floor: 1e-12,
            ridge: 1e-9,
            kmeans_iter: 25,
        }
    }
}

/// Informative coordinates (row-major `n x d`) and redundant squared norms.
#[derive(Debug, Clone)]
pub struct EmData {
    n: usize,
    d: usize,
    dim: usize,
    x: Vec<f64>,
    y2: Vec<f64>,
}

impl EmData {
    pub fn new(z: &DMatrix<f64>, d: usize) -> Result<Self> {
        let (n, dim) = z.shape();
        if d == 0 || d > dim {
            return Err(Error::param(format!(
                "need 1 <= d <= D, got d={d}, D={dim}"
            )));
        }
        let mut x = Vec::with_capacity(n * d);
        let mut y2 = Vec::with_capacity(n);
        for i in 0..n {
            for s in 0..d {
                x.push(z[(i, s)]);
            }
            y2.push((d..dim).map(|s| z[(i, s)] * z[(i, s)]).sum());
        }
        Ok(Self { n, d, dim, x, y2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Posterior component probabilities, `n x K`, rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    // row-major
    r: Vec<f64>,
}

impl Responsibilities {
    /// Validates that entries lie in `[0, 1]` and rows sum to one within
    /// `1e-10`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = m.shape();
        let mut r = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..k {
                let v = m[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::param(format!("responsibility ({i},{j}) = {v}")));
                }
                s += v;
                r.push(v);
            }
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::param(format!(
                    "responsibilities of row {i} sum to {s}"
                )));
            }
        }
        Ok(Self { n, k, r })
    }

    /// Hard (one-hot) responsibilities.
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut r = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            r[i * k + l] = 1.0;
        }
        Self {
            n: labels.len(),
            k,
            r,
        }
    }

    fn random(n: usize, k: usize, rng: &mut crate::rng::Rng) -> Self {
        let mut r = Vec::with_capacity(n * k);
        for _ in 0..n {
            let row: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
            let s: f64 = row.iter().sum();
            r.extend(row.iter().map(|v| v / s));
        }
        Self { n, k, r }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.r[i * self.k..(i + 1) * self.k]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.k, &self.r)
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub d: usize,
    pub k: usize,
    pub dim: usize,
    pub n: usize,
    /// `None` when every start degenerated.
    pub params: Option<ConstrainedGmmParams>,
    pub loglik: f64,
    /// `2 loglik - eta ln n`, or `-inf` for degenerate fits.
    pub bic: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub status: FitStatus,
    /// Log-likelihood after every E-step of the winning start.
    pub trace: Vec<f64>,
}

impl FitResult {
    fn degenerate(
        d: usize,
        k: usize,
        dim: usize,
        n: usize,
        n_iter: usize,
        trace: Vec<f64>,
    ) -> Self {
        Self {
            d,
            k,
            dim,
            n,
            params: None,
            loglik: f64::NEG_INFINITY,
            bic: f64::NEG_INFINITY,
            n_iter,
            converged: false,
            status: FitStatus::Degenerate,
            trace,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == FitStatus::Ok
    }
}

/// Closed-form maximiser of the expected complete-data log-likelihood.
///
/// Fails with a numeric error when a component's total responsibility falls
/// below `max(10 eps n, d + 1)`. Fewer than `d + 1` effective points cannot
/// support a nonsingular covariance, and such components otherwise produce
/// spurious likelihood spikes that the ridge alone does not prevent.
pub fn m_step(
    data: &EmData,
    resp: &Responsibilities,
    opts: &EmOptions,
) -> Result<ConstrainedGmmParams> {
    let (n, d, k) = (data.n, data.d, resp.k);
    if resp.n != n {
        return Err(Error::param("responsibilities do not match data"));
    }
    let r_dim = data.dim - d;
    let threshold = (10.0 * f64::EPSILON * n as f64).max((d + 1) as f64);
    let mut weight = vec![0.0; k];
    let mut means = vec![0.0; k * d];
    let mut y2 = vec![0.0; k];
    first_moments(
        d,
        &data.x,
        &data.y2,
        &resp.r,
        k,
        &mut weight,
        &mut means,
        &mut y2,
    );
    if let Some(c) = weight.iter().position(|&w| !(w >= threshold)) {
        return Err(Error::Numeric(format!(
            "component {c} has total responsibility {} < {threshold}",
            weight[c]
        )));
    }
    for c in 0..k {
        for s in 0..d {
            means[c * d + s] /= weight[c];
        }
    }
    let mut scatter_acc = vec![0.0; k * d * d];
    scatter(d, &data.x, &resp.r, k, &means, &mut scatter_acc);
    let total: f64 = weight.iter().sum();
    let components = (0..k)
        .map(|c| {
            let sc = &scatter_acc[c * d * d..(c + 1) * d * d];
            let mut cov = DMatrix::from_fn(d, d, |a, b| {
                let (a, b) = if a >= b { (a, b) } else { (b, a) };
                sc[a * d + b] / weight[c]
            });
            let ridge = opts.ridge * cov.trace() / d as f64;
            for a in 0..d {
                cov[(a, a)] += ridge;
            }
            let sigma2 =
                (r_dim > 0).then(|| (y2[c] / (r_dim as f64 * weight[c])).max(opts.sigma2_floor));
            Component {
                weight: weight[c] / total,
                mean: DVector::from_column_slice(&means[c * d..(c + 1) * d]),
                covariance: cov,
                sigma2,
            }
        })
        .collect();
    Ok(ConstrainedGmmParams::new_unchecked(d, data.dim, components))
}

/// E-step: responsibilities of `theta` on `data` and the log-likelihood.
fn e_step(data: &EmData, theta: &ConstrainedGmmParams, out: &mut Responsibilities) -> Result<f64> {
    let prep = Prepared::new(theta)?;
    let k = theta.k();
    let mut scratch = vec![0.0; data.d];
    let mut rows = Vec::with_capacity(data.n);
    for i in 0..data.n {
        let terms = &mut out.r[i * k..(i + 1) * k];
        rows.push(prep.row_posterior(data.row(i), data.y2[i], terms, &mut scratch));
    }
    Ok(neumaier_sum(rows))
}

/// `sum_i sum_k r_ik (ln pi_k + ln phi(z_i; theta_k))`.
pub fn expected_complete_loglik(
    data: &EmData,
    theta: &ConstrainedGmmParams,
    resp: &Responsibilities,
) -> Result<f64> {
    let prep = Prepared::new(theta)?;
    let mut scratch = vec![0.0; data.d];
    let mut total = Vec::with_capacity(data.n * theta.k());
    for i in 0..data.n {
        for (c, &w) in resp.row(i).iter().enumerate() {
            if w > 0.0 {
                total.push(
                    w * prep.weighted_component_log_density(
                        c,
                        data.row(i),
                        data.y2[i],
                        &mut scratch,
                    ),
                );
            }
        }
    }
    Ok(neumaier_sum(total))
}

fn run(data: &EmData, init: Responsibilities, opts: &EmOptions) -> FitResult {
    let (n, d, dim, k) = (data.n, data.d, data.dim, init.k);
    let mut resp = init;
    let mut trace = Vec::new();
    let mut theta = None;
    let mut converged = false;
    let mut prev = f64::NEG_INFINITY;
    for iter in 1..=opts.max_iter {
        let Ok(next) = m_step(data, &resp, opts) else {
            return FitResult::degenerate(d, k, dim, n, iter, trace);
        };
        let ll = match e_step(data, &next, &mut resp) {
            Ok(ll) if ll.is_finite() => ll,
            _ => return FitResult::degenerate(d, k, dim, n, iter, trace),
        };
        trace.push(ll);
        theta = Some(next);
        if iter > 1 && (ll - prev).abs() <= opts.tol * ll.abs() {
            converged = true;
            break;
        }
        prev = ll;
    }
    let params = theta.expect("max_iter >= 1");
    let loglik = *trace.last().expect("non-empty");
    let eta = param_count(d, k, dim).expect("validated dimensions");
    FitResult {
        d,
        k,
        dim,
        n,
        params: Some(params),
        loglik,
        bic: bic_value(loglik, eta, n),
        n_iter: trace.len(),
        converged,
        status: FitStatus::Ok,
        trace,
    }
}

fn check_fit_args(z: &DMatrix<f64>, d: usize, k: usize, opts: &EmOptions) -> Result<()> {
    let (n, dim) = z.shape();
    if d == 0 || d > dim {
        return Err(Error::param(format!(
            "need 1 <= d <= D, got d={d}, D={dim}"
        )));
    }
    if k == 0 || n <= k {
        return Err(Error::param(format!("need n > K >= 1, got n={n}, K={k}")));
    }
    if opts.max_iter == 0 || opts.restarts == 0 {
        return Err(Error::param("max_iter and restarts must be positive"));
    }
    Ok(())
}

/// Single EM run from the given initial responsibilities.
pub fn em_fit_from(
    z: &DMatrix<f64>,
    d: usize,
    init: &Responsibilities,
    opts: &EmOptions,
) -> Result<FitResult> {
    check_fit_args(z, d, init.k, opts)?;
    if init.n != z.nrows() {
        return Err(Error::param("initial responsibilities do not match data"));
    }
    let data = EmData::new(z, d)?;
    Ok(run(&data, init.clone(), opts))
}

/// Best-of-restarts maximum likelihood fit of the constrained mixture at
/// `(d, K)`.
///
/// The first start is seeded by k-means on the informative columns, the
/// rest by random responsibilities. Degenerate outcomes are reported through
/// [`FitStatus::Degenerate`], not as errors.
pub fn em_fit(
    z: &DMatrix<f64>,
    d: usize,
    k: usize,
    opts: &EmOptions,
    seed: u64,
) -> Result<FitResult> {
    check_fit_args(z, d, k, opts)?;
    let data = EmData::new(z, d)?;
    let starts = if k == 1 { 1 } else { opts.restarts };
    let mut best: Option<FitResult> = None;
    for start in 0..starts {
        let mut rng = derived_rng(seed, &[purpose::RESTART, start as u64]);
        let init = if start == 0 {
            let km = kmeans(&data.x, d, k, opts.kmeans_iter, &mut rng);
            Responsibilities::from_labels(&km.labels, k)
        } else {
            // consume one draw so random starts differ from the k-means stream
            let _: u64 = rng.random();
            Responsibilities::random(data.n, k, &mut rng)
        };
        let fit = run(&data, init, opts);
        best = match best {
            Some(b) if !(fit.is_ok() && (!b.is_ok() || fit.loglik > b.loglik)) => Some(b),
            _ => Some(fit),
        };
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{loglik, ConstrainedGmmParams};
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    #[test]
    fn single_component_closed_form() {
        let mut rng = crate::rng::Rng::seed_from_u64(1);
        let z = DMatrix::from_fn(200, 4, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5
        });
        let fit = em_fit(&z, 2, 1, &EmOptions::default(), 3).unwrap();
        assert!(fit.converged);
        assert!(fit.n_iter <= 2);
        let p = fit.params.as_ref().unwrap();
        let c = &p.components()[0];
        for s in 0..2 {
            let m = z.column(s).mean();
            assert!((c.mean[s] - m).abs() < 1e-12);
            let v = z.column(s).iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 200.0;
            assert!((c.covariance[(s, s)] - v).abs() < 1e-6 * v);
        }
        let s2 = z.columns(2, 2).iter().map(|x| x * x).sum::<f64>() / 400.0;
        assert!((c.sigma2.unwrap() - s2).abs() < 1e-12);
    }

    #[test]
    fn stored_bic_matches_recomputation() {
        let mut rng = crate::rng::Rng::seed_from_u64(8);
        let z = DMatrix::from_fn(150, 3, |i, _| {
            rng.sample::<f64, _>(StandardNormal) + if i % 2 == 0 { 4.0 } else { 0.0 }
        });
        let fit = em_fit(&z, 2, 2, &EmOptions::default(), 11).unwrap();
        assert!(fit.is_ok());
        assert_eq!(crate::gmm::bic(&z, &fit).unwrap(), fit.bic);
        let p = fit.params.as_ref().unwrap();
        assert_eq!(loglik(&z, p).unwrap(), fit.loglik);
        // params are valid per the public constructor
        ConstrainedGmmParams::new(p.d(), p.dim(), p.components().to_vec(), 1e-12).unwrap();
    }

    #[test]
    fn degenerate_fit_is_reported() {
        // two distinct values, three components: a component must collapse
        let z = DMatrix::from_fn(10, 1, |i, _| if i < 5 { 0.0 } else { 1.0 });
        let fit = em_fit(
            &z,
            1,
            3,
            &EmOptions {
                restarts: 1,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(fit.status, FitStatus::Degenerate);
        assert_eq!(fit.bic, f64::NEG_INFINITY);
        assert_eq!(crate::gmm::bic(&z, &fit).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_bad_arguments() {
        let z = DMatrix::<f64>::zeros(3, 2);
        let o = EmOptions::default();
        assert!(em_fit(&z, 0, 1, &o, 0).is_err());
        assert!(em_fit(&z, 3, 1, &o, 0).is_err());
        assert!(em_fit(&z, 1, 3, &o, 0).is_err());
        assert!(em_fit(&DMatrix::zeros(1, 2), 1, 1, &o, 0).is_err());
    }

    #[test]
    fn reproducible() {
        let mut rng = crate::rng::Rng::seed_from_u64(2);
        let z = DMatrix::from_fn(120, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = em_fit(&z, 2, 3, &EmOptions::default(), 5).unwrap();
        let b = em_fit(&z, 2, 3, &EmOptions::default(), 5).unwrap();
        assert_eq!(a.loglik, b.loglik);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn responsibilities_validation() {
        assert!(
            Responsibilities::from_matrix(&DMatrix::from_row_slice(1, 2, &[0.5, 0.6])).is_err()
        );
        assert!(
            Responsibilities::from_matrix(&DMatrix::from_row_slice(1, 2, &[1.5, -0.5])).is_err()
        );
        let r =
            Responsibilities::from_matrix(&DMatrix::from_row_slice(1, 2, &[0.25, 0.75])).unwrap();
        assert_eq!(r.row(0), &[0.25, 0.75]);
    }
}
