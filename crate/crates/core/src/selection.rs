//! Simultaneous selection of the embedding dimension `d` and the number of
//! clusters `K` by BIC over the constrained mixture family.
//!
//! Three variants are provided:
//!
//! * [`sms`] fits the constrained model at every `(d, K)` and labels vertices
//!   with the winning `D`-dimensional model.
//! * [`sms_reduced`] takes `d_hat` from the same grid, then re-clusters the
//!   first `d_hat` embedding columns with an unconstrained mixture chosen by
//!   BIC.
//! * [`sms_two_step`] picks `K` per `d` with unconstrained mixtures (stopping
//!   at the first BIC decrease), completes each fit with redundant variances
//!   and compares the completed models across `d`.
//!
//! All fits are seeded from `(master seed, purpose, d, K)`, so grid cells can
//! be evaluated in parallel with results identical to a sequential run, and
//! the unconstrained fit at a given `(d, K)` is the same object whichever
//! method asks for it.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::{
    bic_value, em_fit, loglik, map_labels, param_count, responsibilities, Component,
    ConstrainedGmmParams, EmOptions, FitResult, FitStatus,
};
use crate::graph::AdjacencyMatrix;
use crate::rng::{derive_seed, purpose};
use crate::spectral::{extended_ase, ExtendedEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sms,
    SmsReduced,
    TwoStep,
    /// Sequential elbow-then-BIC baseline using the given elbow (1-based).
    BicZg(usize),
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::Sms => "sms".into(),
            Method::SmsReduced => "sms-reduced".into(),
            Method::TwoStep => "two-step".into(),
            Method::BicZg(l) => format!("bic-zg-{l}"),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sms" => Ok(Method::Sms),
            "sms-reduced" => Ok(Method::SmsReduced),
            "two-step" => Ok(Method::TwoStep),
            _ => s
                .strip_prefix("bic-zg-")
                .and_then(|l| l.parse().ok())
                .filter(|&l| l >= 1)
                .map(Method::BicZg)
                .ok_or_else(|| Error::param(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOptions {
    pub em: EmOptions,
    pub seed: u64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            em: EmOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Degenerate,
    /// Not fitted by this method (two-step only fills one `K` per `d`).
    Skipped,
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub d: usize,
    pub k: usize,
    pub bic: f64,
    pub loglik: f64,
    pub converged: bool,
    pub status: CellStatus,
    pub params: Option<ConstrainedGmmParams>,
}

impl GridCell {
    fn skipped(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            bic: f64::NEG_INFINITY,
            loglik: f64::NEG_INFINITY,
            converged: false,
            status: CellStatus::Skipped,
            params: None,
        }
    }

    fn from_fit(fit: FitResult) -> Self {
        let status = match fit.status {
            FitStatus::Ok => CellStatus::Ok,
            FitStatus::Degenerate => CellStatus::Degenerate,
        };
        Self {
            d: fit.d,
            k: fit.k,
            bic: fit.bic,
            loglik: fit.loglik,
            converged: fit.converged,
            status,
            params: fit.params,
        }
    }
}

/// BIC values over `d = 1..=D`, `K = 1..=K_max`.
#[derive(Debug, Clone)]
pub struct BicGrid {
    dim: usize,
    k_max: usize,
    /// `(d - 1) * k_max + (k - 1)`
    cells: Vec<GridCell>,
}

impl BicGrid {
    fn new(dim: usize, k_max: usize, cells: Vec<GridCell>) -> Self {
        debug_assert_eq!(cells.len(), dim * k_max);
        Self { dim, k_max, cells }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn cell(&self, d: usize, k: usize) -> &GridCell {
        &self.cells[(d - 1) * self.k_max + (k - 1)]
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn evaluated(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.status != CellStatus::Skipped)
            .count()
    }

    /// Cell with the largest finite BIC; ties go to smaller `d`, then
    /// smaller `K`.
    pub fn argmax(&self) -> Result<&GridCell> {
        let mut best: Option<&GridCell> = None;
        for c in &self.cells {
            if c.status == CellStatus::Ok && c.bic.is_finite() && best.is_none_or(|b| c.bic > b.bic)
            {
                best = Some(c);
            }
        }
        best.ok_or(Error::AllDegenerate)
    }

    /// CSV with header `d,K,bic,loglik,converged,status`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("d,K,bic,loglik,converged,status\n");
        for c in &self.cells {
            let status = match c.status {
                CellStatus::Ok => "ok",
                CellStatus::Degenerate => "degenerate",
                CellStatus::Skipped => "skipped",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.d,
                c.k,
                fmt_f64(c.bic),
                fmt_f64(c.loglik),
                c.converged,
                status
            );
        }
        s
    }
}

/// 17 significant digits; infinities as `-inf`/`inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub method: Method,
    pub d_hat: usize,
    pub k_hat: usize,
    /// 0-based cluster labels, one per vertex.
    pub labels: Vec<usize>,
    pub grid: BicGrid,
}

/// Result of clustering a (truncated) embedding with unconstrained
/// full-covariance mixtures, `K` chosen by BIC.
#[derive(Debug, Clone)]
pub struct GmmBic {
    pub k_hat: usize,
    pub labels: Vec<usize>,
    pub fits: Vec<FitResult>,
}

fn unconstrained_seed(master: u64, d: usize, k: usize) -> u64 {
    derive_seed(master, &[purpose::UNCONSTRAINED_FIT, d as u64, k as u64])
}

fn constrained_seed(master: u64, d: usize, k: usize) -> u64 {
    derive_seed(master, &[purpose::CONSTRAINED_FIT, d as u64, k as u64])
}

fn unconstrained_fit(x: &DMatrix<f64>, k: usize, opts: &SelectionOptions) -> Result<FitResult> {
    let d = x.ncols();
    em_fit(x, d, k, &opts.em, unconstrained_seed(opts.seed, d, k))
}

/// Largest `K` that can be fitted on `n` rows.
fn admissible_k(k_max: usize, n: usize) -> usize {
    k_max.min(n.saturating_sub(1))
}

/// Fits full-covariance mixtures with `K = 1..=k_max` on every column of `x`
/// and labels rows with the BIC winner (ties to smaller `K`).
///
/// `prefit` holds already computed fits for `K = 1..=prefit.len()` on the
/// same data and seed, which are reused verbatim.
pub fn gmm_bic_with(
    x: &DMatrix<f64>,
    k_max: usize,
    opts: &SelectionOptions,
    prefit: &[FitResult],
) -> Result<GmmBic> {
    if k_max == 0 {
        return Err(Error::param("K_max must be at least 1"));
    }
    let k_top = admissible_k(k_max, x.nrows());
    if k_top == 0 {
        return Err(Error::param("need at least two rows to fit a mixture"));
    }
    let reuse = prefit.len().min(k_top);
    let mut fits: Vec<FitResult> = prefit[..reuse].to_vec();
    let rest: Vec<FitResult> = (reuse + 1..=k_top)
        .into_par_iter()
        .map(|k| unconstrained_fit(x, k, opts))
        .collect::<Result<_>>()?;
    fits.extend(rest);
    let mut best: Option<usize> = None;
    for (i, f) in fits.iter().enumerate() {
        if f.is_ok() && best.is_none_or(|b| f.bic > fits[b].bic) {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::AllDegenerate)?;
    let theta = fits[best].params.as_ref().expect("ok fit has params");
    let labels = map_labels(x, theta)?;
    Ok(GmmBic {
        k_hat: best + 1,
        labels,
        fits,
    })
}

pub fn gmm_bic(x: &DMatrix<f64>, k_max: usize, opts: &SelectionOptions) -> Result<GmmBic> {
    gmm_bic_with(x, k_max, opts, &[])
}

fn check_k_max(k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::param("K_max must be at least 1"));
    }
    Ok(())
}

/// Fits the constrained model at every `(d, K)`; exactly `D * K_max` cells
/// are evaluated (cells with `K >= n` are reported degenerate).
pub fn constrained_grid(
    z: &DMatrix<f64>,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<BicGrid> {
    check_k_max(k_max)?;
    let dim = z.ncols();
    let n = z.nrows();
    let pairs: Vec<(usize, usize)> = (1..=dim)
        .flat_map(|d| (1..=k_max).map(move |k| (d, k)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(d, k)| {
            if k >= n {
                let mut c = GridCell::skipped(d, k);
                c.status = CellStatus::Degenerate;
                return Ok(c);
            }
            let fit = em_fit(z, d, k, &opts.em, constrained_seed(opts.seed, d, k))?;
            Ok(GridCell::from_fit(fit))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BicGrid::new(dim, k_max, cells))
}

/// Full-model MAP labels from the grid winner.
pub fn sms_from_grid(z: &DMatrix<f64>, grid: BicGrid) -> Result<SelectionResult> {
    let best = grid.argmax()?;
    let theta = best.params.as_ref().expect("ok cell has params");
    let labels = map_labels(z, theta)?;
    Ok(SelectionResult {
        method: Method::Sms,
        d_hat: best.d,
        k_hat: best.k,
        labels,
        grid,
    })
}

/// Truncates to the grid winner's `d` and re-clusters with
/// [`gmm_bic`]; the reported `K` is the second-stage choice.
pub fn sms_reduced_from_grid(
    z: &DMatrix<f64>,
    grid: BicGrid,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    let d_hat = grid.argmax()?.d;
    let x = z.columns(0, d_hat).into_owned();
    let g = gmm_bic(&x, grid.k_max(), opts)?;
    Ok(SelectionResult {
        method: Method::SmsReduced,
        d_hat,
        k_hat: g.k_hat,
        labels: g.labels,
        grid,
    })
}

pub fn sms_embedding(
    z: &DMatrix<f64>,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    sms_from_grid(z, constrained_grid(z, k_max, opts)?)
}

pub fn sms_reduced_embedding(
    z: &DMatrix<f64>,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    sms_reduced_from_grid(z, constrained_grid(z, k_max, opts)?, opts)
}

/// Extends an unconstrained fit on the first `d` columns of `z` to the
/// constrained model on all columns, estimating each component's
/// redundant variance from the fit's responsibilities.
pub fn complete_with_redundant(
    z: &DMatrix<f64>,
    informative: &ConstrainedGmmParams,
    sigma2_floor: f64,
) -> Result<ConstrainedGmmParams> {
    let d = informative.d();
    let dim = z.ncols();
    if informative.dim() != d || d > dim {
        return Err(Error::param(
            "expected an unconstrained fit on the leading columns",
        ));
    }
    if d == dim {
        return Ok(informative.clone());
    }
    let x = z.columns(0, d).into_owned();
    let r = responsibilities(&x, informative)?;
    let y2: Vec<f64> = (0..z.nrows())
        .map(|i| (d..dim).map(|s| z[(i, s)] * z[(i, s)]).sum())
        .collect();
    let components = informative
        .components()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let nk: f64 = r.column(k).sum();
            let num: f64 = r.column(k).iter().zip(&y2).map(|(w, y)| w * y).sum();
            Component {
                sigma2: Some((num / ((dim - d) as f64 * nk)).max(sigma2_floor)),
                ..c.clone()
            }
        })
        .collect();
    ConstrainedGmmParams::new(d, dim, components, sigma2_floor)
}

pub fn sms_two_step_embedding(
    z: &DMatrix<f64>,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_k_max(k_max)?;
    let dim = z.ncols();
    let n = z.nrows();
    let k_top = admissible_k(k_max, n);
    let per_d: Vec<(Vec<FitResult>, GridCell)> = (1..=dim)
        .into_par_iter()
        .map(|d| -> Result<_> {
            let x = z.columns(0, d).into_owned();
            let mut fits: Vec<FitResult> = Vec::new();
            let mut best: Option<usize> = None;
            for k in 1..=k_top {
                let f = unconstrained_fit(&x, k, opts)?;
                let prev = fits.last().map(|p| p.bic);
                let bic = f.bic;
                fits.push(f);
                if fits[k - 1].is_ok() && best.is_none_or(|b| bic > fits[b].bic) {
                    best = Some(k - 1);
                }
                if prev.is_some_and(|p| bic < p) {
                    break;
                }
            }
            let cell = match best {
                None => {
                    let mut c = GridCell::skipped(d, 1);
                    c.status = CellStatus::Degenerate;
                    c
                }
                Some(b) => {
                    let step1 = &fits[b];
                    let theta = complete_with_redundant(
                        z,
                        step1.params.as_ref().expect("ok fit"),
                        opts.em.sigma2_floor,
                    )?;
                    let ll = loglik(z, &theta)?;
                    let eta = param_count(d, b + 1, dim)?;
                    GridCell {
                        d,
                        k: b + 1,
                        bic: bic_value(ll, eta, n),
                        loglik: ll,
                        converged: step1.converged,
                        status: CellStatus::Ok,
                        params: Some(theta),
                    }
                }
            };
            Ok((fits, cell))
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<GridCell> = (1..=dim)
        .flat_map(|d| (1..=k_max).map(move |k| GridCell::skipped(d, k)))
        .collect();
    for (_, cell) in &per_d {
        let k = cell.k;
        cells[(cell.d - 1) * k_max + (k - 1)] = cell.clone();
    }
    let grid = BicGrid::new(dim, k_max, cells);
    let d_hat = grid.argmax()?.d;
    let x = z.columns(0, d_hat).into_owned();
    let g = gmm_bic_with(&x, k_max, opts, &per_d[d_hat - 1].0)?;
    Ok(SelectionResult {
        method: Method::TwoStep,
        d_hat,
        k_hat: g.k_hat,
        labels: g.labels,
        grid,
    })
}

/// Grid whose only evaluated row is `d`, filled from unconstrained fits on
/// the first `d` columns.
pub(crate) fn grid_from_row(dim: usize, k_max: usize, d: usize, fits: &[FitResult]) -> BicGrid {
    let mut cells: Vec<GridCell> = (1..=dim)
        .flat_map(|d| (1..=k_max).map(move |k| GridCell::skipped(d, k)))
        .collect();
    for f in fits {
        cells[(d - 1) * k_max + (f.k - 1)] = GridCell {
            d,
            ..GridCell::from_fit(f.clone())
        };
    }
    BicGrid::new(dim, k_max, cells)
}

fn embed(a: &AdjacencyMatrix, dim: usize) -> Result<ExtendedEmbedding> {
    extended_ase(a, dim)
}

/// Simultaneous model selection on a graph.
pub fn sms(
    a: &AdjacencyMatrix,
    dim: usize,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_k_max(k_max)?;
    sms_embedding(embed(a, dim)?.z(), k_max, opts)
}

pub fn sms_reduced(
    a: &AdjacencyMatrix,
    dim: usize,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_k_max(k_max)?;
    sms_reduced_embedding(embed(a, dim)?.z(), k_max, opts)
}

pub fn sms_two_step(
    a: &AdjacencyMatrix,
    dim: usize,
    k_max: usize,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_k_max(k_max)?;
    sms_two_step_embedding(embed(a, dim)?.z(), k_max, opts)
}
