//! Replicated Monte Carlo runs of the selection methods.
//!
//! Every `(setting, replicate)` pair is an independent task seeded from
//! `(master seed, setting, replicate)`. Tasks run on a dedicated thread pool
//! and are collected in their original order, so outputs do not depend on
//! the number of threads. Within a replicate the graph is embedded once and
//! the constrained BIC grid is shared by `sms` and `sms-reduced`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};
use sms_core::baselines::seq_bic_zg_embedding;
use sms_core::gmm::sample_model;
use sms_core::graph::sample_sbm;
use sms_core::metrics::{ari, mean, median, selection_table, sign_test, SelectionTable};
use sms_core::rng::{derive_seed, purpose};
use sms_core::selection::{
    constrained_grid, sms_from_grid, sms_reduced_from_grid, sms_two_step_embedding, BicGrid,
    Method, SelectionOptions, SelectionResult,
};
use sms_core::spectral::{extended_ase, ExtendedEmbedding};

use crate::config::{Experiment, Setting, Source};
use crate::error::{HarnessError, Result};
use crate::output::{csv_field, num, opt_num};

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub setting: usize,
    pub n: usize,
    pub p: Option<f64>,
    pub replicate: usize,
    pub method: Method,
    /// Replicate seed shared by the sampler and every fit.
    pub seed: u64,
    pub outcome: std::result::Result<Selected, String>,
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub d_hat: usize,
    pub k_hat: usize,
    /// One ARI per truth labeling, in [`Experiment::truth_names`] order.
    pub ari: Vec<f64>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

pub fn replicate_seed(master: u64, setting: usize, replicate: usize) -> u64 {
    derive_seed(
        master,
        &[purpose::REPLICATE, setting as u64, replicate as u64],
    )
}

/// Embedding, eigenvalues (absent for mixture samples) and truth labels of
/// one replicate.
struct ReplicateData<'a> {
    z: std::borrow::Cow<'a, DMatrix<f64>>,
    eigenvalues: Option<&'a [f64]>,
    truths: Vec<std::borrow::Cow<'a, [usize]>>,
}

fn replicate_data<'a>(
    exp: &'a Experiment,
    dim: usize,
    setting: &Setting,
    seed: u64,
    shared: Option<&'a ExtendedEmbedding>,
    owned: &'a mut Option<ExtendedEmbedding>,
) -> sms_core::Result<ReplicateData<'a>> {
    use std::borrow::Cow;
    match &exp.source {
        Source::Sbm => {
            let params = setting.sbm.as_ref().expect("sbm settings carry parameters");
            let (tau, a) = sample_sbm(setting.n, params, seed)?;
            let emb = owned.insert(extended_ase(&a, dim)?);
            Ok(ReplicateData {
                z: Cow::Borrowed(emb.z()),
                eigenvalues: Some(emb.eigenvalues()),
                truths: vec![Cow::Owned(tau.into_inner())],
            })
        }
        Source::Gmm(theta) => {
            let (labels, z) = sample_model(theta, setting.n, seed)?;
            Ok(ReplicateData {
                z: Cow::Owned(z),
                eigenvalues: None,
                truths: vec![Cow::Owned(labels)],
            })
        }
        Source::Graph(g) => {
            let emb = shared.expect("graph embedding computed up front");
            Ok(ReplicateData {
                z: Cow::Borrowed(emb.z()),
                eigenvalues: Some(emb.eigenvalues()),
                truths: g
                    .truths
                    .iter()
                    .map(|(_, t)| Cow::Borrowed(t.as_slice()))
                    .collect(),
            })
        }
    }
}

fn run_replicate(
    exp: &Experiment,
    dim: usize,
    setting: &Setting,
    replicate: usize,
    shared: Option<&std::result::Result<ExtendedEmbedding, String>>,
) -> Vec<RunRecord> {
    let seed = replicate_seed(exp.seed, setting.index, replicate);
    let start = Instant::now();
    let record = |method: Method, outcome, runtime_ms| RunRecord {
        setting: setting.index,
        n: setting.n,
        p: setting.p,
        replicate,
        method,
        seed,
        outcome,
        runtime_ms: if exp.record_timing { runtime_ms } else { None },
    };
    let shared = match shared {
        Some(Err(e)) => {
            return exp
                .methods
                .iter()
                .map(|&m| record(m, Err(e.clone()), None))
                .collect();
        }
        Some(Ok(emb)) => Some(emb),
        None => None,
    };
    let mut owned = None;
    let data = match replicate_data(exp, dim, setting, seed, shared, &mut owned) {
        Ok(d) => d,
        Err(e) => {
            return exp
                .methods
                .iter()
                .map(|&m| record(m, Err(e.to_string()), None))
                .collect();
        }
    };
    let prep_ms = start.elapsed().as_secs_f64() * 1e3;
    let opts = SelectionOptions { em: exp.em, seed };
    let z: &DMatrix<f64> = &data.z;

    let needs_grid = exp
        .methods
        .iter()
        .any(|m| matches!(m, Method::Sms | Method::SmsReduced));
    let (grid, grid_ms): (Option<std::result::Result<BicGrid, String>>, f64) = if needs_grid {
        let t = Instant::now();
        let g = constrained_grid(z, exp.k_max, &opts).map_err(|e| e.to_string());
        (Some(g), t.elapsed().as_secs_f64() * 1e3)
    } else {
        (None, 0.0)
    };

    let records = exp
        .methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let (result, shared_ms): (std::result::Result<SelectionResult, String>, f64) =
                match method {
                    Method::Sms | Method::SmsReduced => {
                        let g = grid.as_ref().expect("grid computed for grid methods");
                        let r = g.clone().and_then(|g| {
                            let r = if method == Method::Sms {
                                sms_from_grid(z, g)
                            } else {
                                sms_reduced_from_grid(z, g, &opts)
                            };
                            r.map_err(|e| e.to_string())
                        });
                        (r, grid_ms)
                    }
                    Method::TwoStep => (
                        sms_two_step_embedding(z, exp.k_max, &opts).map_err(|e| e.to_string()),
                        0.0,
                    ),
                    Method::BicZg(ell) => {
                        let eig = data.eigenvalues.expect("validated: spectrum available");
                        let r = seq_bic_zg_embedding(z, eig, ell, exp.k_max, &opts);
                        (r.map_err(|e| e.to_string()), 0.0)
                    }
                };
            let outcome = result.and_then(|r| {
                let ari = data
                    .truths
                    .iter()
                    .map(|t| ari(&r.labels, t))
                    .collect::<sms_core::Result<Vec<f64>>>()
                    .map_err(|e| e.to_string())?;
                Ok(Selected {
                    d_hat: r.d_hat,
                    k_hat: r.k_hat,
                    ari,
                })
            });
            let ms = prep_ms + shared_ms + t.elapsed().as_secs_f64() * 1e3;
            record(method, outcome, Some(ms))
        })
        .collect();
    info!(
        "setting {} (n={}) replicate {replicate} done in {:.1}s",
        setting.index,
        setting.n,
        start.elapsed().as_secs_f64()
    );
    records
}

pub(crate) fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build()
        .map_err(|e| HarnessError::config(format!("cannot start thread pool: {e}")))
}

/// Runs every `(setting, replicate, method)` combination. Records come back
/// ordered by setting, replicate, then the configured method order.
pub fn run_pipeline(exp: &Experiment) -> Result<Vec<RunRecord>> {
    let dim = exp.embedding_dim()?;
    let pool = thread_pool(exp.threads)?;
    let tasks: Vec<(&Setting, usize)> = exp
        .settings
        .iter()
        .flat_map(|s| (0..exp.replicates).map(move |r| (s, r)))
        .collect();
    Ok(pool.install(|| {
        let shared = match &exp.source {
            Source::Graph(g) => Some(extended_ase(&g.adjacency, dim).map_err(|e| e.to_string())),
            _ => None,
        };
        tasks
            .par_iter()
            .map(|&(s, r)| run_replicate(exp, dim, s, r, shared.as_ref()))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }))
}

fn p_field(p: Option<f64>) -> String {
    opt_num(p)
}

pub fn records_csv(exp: &Experiment, records: &[RunRecord]) -> String {
    let truths = exp.truth_names();
    let mut s = String::from("setting,n,p,replicate,method,seed,status,error,d_hat,K_hat");
    for t in &truths {
        let _ = write!(s, ",ari_{t}");
    }
    s.push_str(",runtime_ms\n");
    for r in records {
        let _ = write!(
            s,
            "{},{},{},{},{},{},",
            r.setting,
            r.n,
            p_field(r.p),
            r.replicate,
            r.method,
            r.seed
        );
        match &r.outcome {
            Ok(sel) => {
                let _ = write!(s, "ok,,{},{}", sel.d_hat, sel.k_hat);
                for a in &sel.ari {
                    let _ = write!(s, ",{}", num(*a));
                }
            }
            Err(e) => {
                let _ = write!(s, "error,{},,", csv_field(e));
                for _ in &truths {
                    s.push(',');
                }
            }
        }
        let _ = writeln!(s, ",{}", opt_num(r.runtime_ms));
    }
    s
}

/// Aggregates of one method within one setting.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub setting: usize,
    pub n: usize,
    pub p: Option<f64>,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean_ari: Vec<f64>,
    pub median_ari: Vec<f64>,
    pub mean_d_hat: f64,
    pub mean_k_hat: f64,
    /// Counts of selected `(d, K)`, with rates against the truth when known.
    pub selection: Option<SelectionTable>,
    pub counts: BTreeMap<(usize, usize), usize>,
}

pub fn summarize(exp: &Experiment, records: &[RunRecord]) -> Vec<MethodSummary> {
    let n_truths = exp.truth_names().len();
    let mut out = Vec::new();
    for setting in &exp.settings {
        for &method in &exp.methods {
            let rs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.setting == setting.index && r.method == method)
                .collect();
            let ok: Vec<&Selected> = rs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let column = |t: usize| ok.iter().map(|s| s.ari[t]).collect::<Vec<f64>>();
            let mut counts = BTreeMap::new();
            for s in &ok {
                *counts.entry((s.d_hat, s.k_hat)).or_insert(0) += 1;
            }
            let pairs = ok.iter().map(|s| (s.d_hat, s.k_hat));
            let selection = exp
                .truth_dims(setting)
                .and_then(|truth| selection_table(pairs, truth).ok());
            out.push(MethodSummary {
                setting: setting.index,
                n: setting.n,
                p: setting.p,
                method,
                runs: rs.len(),
                failures: rs.len() - ok.len(),
                mean_ari: (0..n_truths).map(|t| mean(&column(t))).collect(),
                median_ari: (0..n_truths).map(|t| median(&column(t))).collect(),
                mean_d_hat: mean(&ok.iter().map(|s| s.d_hat as f64).collect::<Vec<_>>()),
                mean_k_hat: mean(&ok.iter().map(|s| s.k_hat as f64).collect::<Vec<_>>()),
                selection,
                counts,
            });
        }
    }
    out
}

/// ARI differences `a - b` for every pair of methods (config order), one
/// per replicate where both succeeded.
#[derive(Debug, Clone)]
pub struct PairedDifferences {
    pub setting: usize,
    pub n: usize,
    pub p: Option<f64>,
    pub truth: String,
    pub a: Method,
    pub b: Method,
    pub replicates: Vec<usize>,
    pub differences: Vec<f64>,
}

pub fn paired_differences(exp: &Experiment, records: &[RunRecord]) -> Vec<PairedDifferences> {
    let truths = exp.truth_names();
    let mut out = Vec::new();
    for setting in &exp.settings {
        let ari_of = |m: Method, rep: usize, t: usize| {
            records
                .iter()
                .find(|r| r.setting == setting.index && r.replicate == rep && r.method == m)
                .and_then(|r| r.outcome.as_ref().ok())
                .map(|s| s.ari[t])
        };
        for (t, truth) in truths.iter().enumerate() {
            for (i, &a) in exp.methods.iter().enumerate() {
                for &b in &exp.methods[i + 1..] {
                    let mut replicates = Vec::new();
                    let mut differences = Vec::new();
                    for rep in 0..exp.replicates {
                        if let (Some(x), Some(y)) = (ari_of(a, rep, t), ari_of(b, rep, t)) {
                            replicates.push(rep);
                            differences.push(x - y);
                        }
                    }
                    out.push(PairedDifferences {
                        setting: setting.index,
                        n: setting.n,
                        p: setting.p,
                        truth: truth.clone(),
                        a,
                        b,
                        replicates,
                        differences,
                    });
                }
            }
        }
    }
    out
}

/// All pipeline output files as `(name, contents)`.
pub fn pipeline_files(exp: &Experiment, records: &[RunRecord]) -> Vec<(String, String)> {
    let truths = exp.truth_names();
    let summaries = summarize(exp, records);
    let pairs = paired_differences(exp, records);

    let mut summary = String::from("setting,n,p,method,runs,failures");
    for t in &truths {
        let _ = write!(summary, ",mean_ari_{t},median_ari_{t}");
    }
    summary.push_str(",mean_d_hat,mean_K_hat,correct_d_rate,correct_K_rate,correct_both_rate\n");
    let mut table = String::from("setting,n,p,method,d_hat,K_hat,count\n");
    let mut layout = String::from("setting,n,p,method,d_hat");
    for k in 1..=exp.k_max {
        let _ = write!(layout, ",K{k}");
    }
    layout.push('\n');
    for m in &summaries {
        let _ = write!(
            summary,
            "{},{},{},{},{},{}",
            m.setting,
            m.n,
            p_field(m.p),
            m.method,
            m.runs,
            m.failures
        );
        for t in 0..truths.len() {
            let _ = write!(summary, ",{},{}", num(m.mean_ari[t]), num(m.median_ari[t]));
        }
        let rates = m
            .selection
            .as_ref()
            .map(|s| (s.correct_d_rate, s.correct_k_rate, s.correct_both_rate));
        let _ = writeln!(
            summary,
            ",{},{},{},{},{}",
            num(m.mean_d_hat),
            num(m.mean_k_hat),
            opt_num(rates.map(|r| r.0)),
            opt_num(rates.map(|r| r.1)),
            opt_num(rates.map(|r| r.2))
        );
        for ((d, k), c) in &m.counts {
            let _ = writeln!(
                table,
                "{},{},{},{},{d},{k},{c}",
                m.setting,
                m.n,
                p_field(m.p),
                m.method
            );
        }
        for d in 1..=exp.dim.unwrap_or(0) {
            let _ = write!(
                layout,
                "{},{},{},{},{d}",
                m.setting,
                m.n,
                p_field(m.p),
                m.method
            );
            for k in 1..=exp.k_max {
                let _ = write!(layout, ",{}", m.counts.get(&(d, k)).copied().unwrap_or(0));
            }
            layout.push('\n');
        }
    }

    let mut diffs = String::from("setting,n,p,truth,method_a,method_b,replicate,difference\n");
    let mut signs = String::from(
        "setting,n,p,truth,method_a,method_b,wins,losses,ties,p_a_better,p_b_better\n",
    );
    let mut sign_json = Vec::new();
    for pd in &pairs {
        let head = format!(
            "{},{},{},{},{},{}",
            pd.setting,
            pd.n,
            p_field(pd.p),
            pd.truth,
            pd.a,
            pd.b
        );
        for (rep, d) in pd.replicates.iter().zip(&pd.differences) {
            let _ = writeln!(diffs, "{head},{rep},{}", num(*d));
        }
        let fwd = sign_test(&pd.differences);
        let rev = sign_test(&pd.differences.iter().map(|d| -d).collect::<Vec<_>>());
        let _ = writeln!(
            signs,
            "{head},{},{},{},{},{}",
            fwd.wins,
            fwd.losses,
            fwd.ties,
            num(fwd.p_value),
            num(rev.p_value)
        );
        sign_json.push(json!({
            "setting": pd.setting, "truth": pd.truth, "method_a": pd.a.tag(), "method_b": pd.b.tag(),
            "mean_difference": mean(&pd.differences), "wins": fwd.wins, "losses": fwd.losses,
            "ties": fwd.ties, "p_a_better": fwd.p_value, "p_b_better": rev.p_value,
        }));
    }

    let failures = records.iter().filter(|r| !r.is_ok()).count();
    let settings: Vec<Value> = exp
        .settings
        .iter()
        .map(|s| {
            let methods: Vec<Value> = summaries
                .iter()
                .filter(|m| m.setting == s.index)
                .map(|m| {
                    let per_truth = |v: &[f64]| -> Value {
                        truths.iter().zip(v).map(|(t, x)| (t.clone(), json!(x))).collect()
                    };
                    json!({
                        "method": m.method.tag(),
                        "runs": m.runs,
                        "failures": m.failures,
                        "mean_ari": per_truth(&m.mean_ari),
                        "median_ari": per_truth(&m.median_ari),
                        "mean_d_hat": m.mean_d_hat,
                        "mean_K_hat": m.mean_k_hat,
                        "correct_d_rate": m.selection.as_ref().map(|t| t.correct_d_rate),
                        "correct_K_rate": m.selection.as_ref().map(|t| t.correct_k_rate),
                        "selection": m.counts.iter().map(|((d, k), c)| json!([d, k, c])).collect::<Vec<_>>(),
                    })
                })
                .collect();
            json!({
                "setting": s.index,
                "n": s.n,
                "p": s.p,
                "truth_dims": exp.truth_dims(s),
                "methods": methods,
            })
        })
        .collect();
    let doc = json!({
        "seed": exp.seed,
        "replicates": exp.replicates,
        "dim": exp.dim,
        "k_max": exp.k_max,
        "methods": exp.methods.iter().map(Method::tag).collect::<Vec<_>>(),
        "em": {
            "tol": exp.em.tol, "max_iter": exp.em.max_iter, "restarts": exp.em.restarts,
            "ridge": exp.em.ridge, "sigma2_floor": exp.em.sigma2_floor,
        },
        "records": records.len(),
        "failures": failures,
        "settings": settings,
        "sign_tests": sign_json,
    });
    let mut json_text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    json_text.push('\n');

    vec![
        ("records.csv".into(), records_csv(exp, records)),
        ("summary.csv".into(), summary),
        ("selection_table.csv".into(), table),
        ("selection_layout.csv".into(), layout),
        ("paired_differences.csv".into(), diffs),
        ("sign_tests.csv".into(), signs),
        ("summary.json".into(), json_text),
    ]
}
