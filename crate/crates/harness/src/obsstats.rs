//! Within-block statistics of the redundant embedding columns over
//! replicated SBM samples.

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;
use sms_core::graph::sample_sbm;
use sms_core::metrics::median;
use sms_core::spectral::{block_stats, extended_ase, BlockStats};

use crate::config::{numerical_rank, Experiment, Setting, Source};
use crate::error::{HarnessError, Result};
use crate::output::{csv_field, num};
use crate::pipeline::{replicate_seed, thread_pool};

/// Marker line written to every statistics file when `d = D`.
pub const EMPTY_MARKER: &str = "# empty: no redundant dimensions (d = D)";

#[derive(Debug, Clone)]
pub struct ObsReplicate {
    pub setting: usize,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub stats: std::result::Result<BlockStats, String>,
}

impl ObsReplicate {
    /// Median over blocks and redundant dimensions of |within-block mean|.
    pub fn median_abs_mean(&self) -> Option<f64> {
        let s = self.stats.as_ref().ok()?;
        let v: Vec<f64> = s
            .blocks
            .iter()
            .flat_map(|b| b.mean.iter().map(|x| x.abs()))
            .collect();
        (!v.is_empty()).then(|| median(&v))
    }

    /// Median over blocks of the mean |off-diagonal covariance|.
    pub fn median_offdiag(&self) -> Option<f64> {
        let s = self.stats.as_ref().ok()?;
        Some(median(&s.mean_abs_off_diagonal()))
    }
}

/// Informative dimension used to split the embedding.
pub fn split_dimension(exp: &Experiment, setting: &Setting) -> Result<usize> {
    let dim = exp.embedding_dim()?;
    let d = match (exp.obsstats.d, &setting.sbm) {
        (Some(d), _) => d,
        (None, Some(p)) => numerical_rank(p),
        (None, None) => return Err(HarnessError::config("obsstats needs an sbm model")),
    };
    if d > dim {
        return Err(HarnessError::config(format!(
            "obsstats d = {d} exceeds dim = {dim}"
        )));
    }
    Ok(d)
}

/// Samples, embeds and summarizes every `(setting, replicate)`; seeds match
/// the pipeline's, so the graphs are the same ones the pipeline would see.
pub fn run_obsstats(exp: &Experiment) -> Result<Vec<ObsReplicate>> {
    if !matches!(exp.source, Source::Sbm) {
        return Err(HarnessError::config(
            "obsstats needs an sbm model with known blocks",
        ));
    }
    let dim = exp.embedding_dim()?;
    let splits = exp
        .settings
        .iter()
        .map(|s| split_dimension(exp, s))
        .collect::<Result<Vec<_>>>()?;
    let pool = thread_pool(exp.threads)?;
    let tasks: Vec<(&Setting, usize)> = exp
        .settings
        .iter()
        .flat_map(|s| (0..exp.replicates).map(move |r| (s, r)))
        .collect();
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| {
                let seed = replicate_seed(exp.seed, s.index, r);
                let stats = (|| -> sms_core::Result<BlockStats> {
                    let params = s.sbm.as_ref().expect("sbm settings carry parameters");
                    let (tau, a) = sample_sbm(s.n, params, seed)?;
                    let emb = extended_ase(&a, dim)?;
                    let (_, y) = emb.split(splits[s.index])?;
                    block_stats(y, &tau)
                })()
                .map_err(|e| e.to_string());
                info!("obsstats setting {} replicate {r} done", s.index);
                ObsReplicate {
                    setting: s.index,
                    n: s.n,
                    replicate: r,
                    seed,
                    stats,
                }
            })
            .collect()
    }))
}

pub fn obsstats_files(exp: &Experiment, reps: &[ObsReplicate]) -> Result<Vec<(String, String)>> {
    let mut means = String::from("setting,n,replicate,block,dimension,mean\n");
    let var_head = if exp.obsstats.scale_by_n {
        "variance_times_n"
    } else {
        "variance"
    };
    let mut vars = format!("setting,n,replicate,block,dimension,{var_head}\n");
    let mut off = String::from("setting,n,replicate,block,mean_abs_offdiag,max_abs_offdiag\n");
    let mut summary =
        String::from("setting,n,replicate,seed,status,error,median_abs_mean,median_offdiag\n");
    let dim = exp.embedding_dim()?;
    let empty = exp
        .settings
        .iter()
        .map(|s| split_dimension(exp, s).map(|d| d == dim))
        .collect::<Result<Vec<_>>>()?;
    if empty.iter().all(|&e| e) {
        for f in [&mut means, &mut vars, &mut off, &mut summary] {
            f.push_str(EMPTY_MARKER);
            f.push('\n');
        }
    } else {
        for r in reps {
            let d = split_dimension(exp, &exp.settings[r.setting])?;
            let head = format!("{},{},{}", r.setting, r.n, r.replicate);
            match &r.stats {
                Err(e) => {
                    let _ = writeln!(summary, "{head},{},error,{},,", r.seed, csv_field(e));
                }
                Ok(stats) => {
                    let _ = writeln!(
                        summary,
                        "{head},{},ok,,{},{}",
                        r.seed,
                        r.median_abs_mean().map_or_else(String::new, num),
                        r.median_offdiag().map_or_else(String::new, num)
                    );
                    let scale = if exp.obsstats.scale_by_n {
                        r.n as f64
                    } else {
                        1.0
                    };
                    for (b, blk) in stats.blocks.iter().enumerate() {
                        for (j, (m, v)) in blk.mean.iter().zip(blk.variances.iter()).enumerate() {
                            let dim = d + j + 1;
                            let _ = writeln!(means, "{head},{},{dim},{}", b + 1, num(*m));
                            let _ = writeln!(vars, "{head},{},{dim},{}", b + 1, num(v * scale));
                        }
                        let p = blk.covariance.nrows();
                        let max = (0..p)
                            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
                            .map(|(i, j)| blk.covariance[(i, j)].abs())
                            .fold(0.0, f64::max);
                        let mean = stats.mean_abs_off_diagonal()[b];
                        let _ = writeln!(off, "{head},{},{},{}", b + 1, num(mean), num(max));
                    }
                }
            }
        }
    }
    Ok(vec![
        ("obs_means.csv".into(), means),
        ("obs_variances.csv".into(), vars),
        ("obs_offdiag.csv".into(), off),
        ("obs_summary.csv".into(), summary),
    ])
}
