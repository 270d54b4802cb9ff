//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nalgebra::DMatrix;
use serde_json::json;
use sms_core::baselines::seq_bic_zg_embedding;
use sms_core::gmm::{em_fit, map_labels};
use sms_core::graph::AdjacencyMatrix;
use sms_core::io::{matrix_csv, read_edge_list, read_label_columns, write_labels};
use sms_core::metrics::ari;
use sms_core::selection::{
    sms_embedding, sms_reduced_embedding, sms_two_step_embedding, Method, SelectionOptions,
};
use sms_core::spectral::extended_ase;

use crate::config::{ExperimentConfig, Overrides, OUTPUT_DIR_ENV};
use crate::error::{HarnessError, Result};
use crate::generate::generate_files;
use crate::ingest::{ingest, write_ingested};
use crate::obsstats::{obsstats_files, run_obsstats};
use crate::output::{num, write_outputs};
use crate::pipeline::{pipeline_files, run_pipeline};

#[derive(Debug, Parser)]
#[command(
    name = "sms",
    version,
    about = "Spectral clustering with simultaneous (d, K) selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample graphs (or mixture samples) with truth labels.
    Generate(ConfigArgs),
    /// Write the extended spectral embedding of a graph as CSV.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit the constrained mixture at a single (d, K).
    Fit {
        #[command(flatten)]
        input: EmbeddingInput,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one selection method on one graph.
    Select {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label CSV to score the result against.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Full Monte Carlo experiment.
    Pipeline(ConfigArgs),
    /// Within-block statistics of the redundant embedding columns.
    Obsstats(ConfigArgs),
    /// Adjusted Rand index between two label files.
    Ari {
        a: PathBuf,
        b: PathBuf,
        /// Label column of the first file (default: the first column).
        #[arg(long)]
        column_a: Option<String>,
        #[arg(long)]
        column_b: Option<String>,
    },
    /// Validate an edge list, optionally keeping its largest component.
    Ingest {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        largest_component: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            replicates: self.replicates,
            threads: self.threads,
            output_dir: self.output_dir.clone(),
            n: self.n.clone(),
            dim: self.dim,
            k_max: self.k_max,
            methods: self.methods.clone(),
        });
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct EmbeddingInput {
    /// Edge list; embedded to `--dim` columns.
    #[arg(long, requires = "dim")]
    graph: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// Embedding CSV as written by `embed`.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some replicates or methods failed; outputs were still written.
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 2,
        }
    }
}

fn plain_output_dir(flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            HarnessError::config(format!(
                "no output directory: pass --output-dir or set {OUTPUT_DIR_ENV}"
            ))
        })
}

fn load_graph(path: &Path) -> Result<AdjacencyMatrix> {
    let list = read_edge_list(path)?;
    let (a, dup) = AdjacencyMatrix::from_edges(list.n, list.edges)?;
    if dup > 0 {
        warn!("{}: dropped {dup} duplicate edge(s)", path.display());
    }
    Ok(a)
}

/// Parses a headerless numeric CSV.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| HarnessError::config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(HarnessError::config(format!(
                "{}:{}: ragged row",
                path.display(),
                i + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::config(format!(
            "{}: empty matrix",
            path.display()
        )));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn first_or_named(path: &Path, column: Option<&str>) -> Result<Vec<usize>> {
    let (names, mut cols) = read_label_columns(path)?;
    let idx = match column {
        None => 0,
        Some(c) => names.iter().position(|n| n == c).ok_or_else(|| {
            HarnessError::config(format!("{}: no label column '{c}'", path.display()))
        })?,
    };
    Ok(cols.swap_remove(idx))
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let exp = cfg.resolve()?;
            let dir = cfg.output_dir()?;
            write_outputs(&dir, &generate_files(&exp)?)?;
            info!("wrote samples to {}", dir.display());
            Ok(Outcome::Success)
        }
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let exp = cfg.resolve()?;
            let dir = cfg.output_dir()?;
            let records = run_pipeline(&exp)?;
            write_outputs(&dir, &pipeline_files(&exp, &records))?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            info!(
                "{} records ({failed} failed) written to {}",
                records.len(),
                dir.display()
            );
            Ok(if failed == 0 {
                Outcome::Success
            } else {
                Outcome::Partial
            })
        }
        Command::Obsstats(args) => {
            let cfg = args.load()?;
            let exp = cfg.resolve()?;
            let dir = cfg.output_dir()?;
            let reps = run_obsstats(&exp)?;
            write_outputs(&dir, &obsstats_files(&exp, &reps)?)?;
            let failed = reps.iter().filter(|r| r.stats.is_err()).count();
            Ok(if failed == 0 {
                Outcome::Success
            } else {
                Outcome::Partial
            })
        }
        Command::Embed {
            graph,
            dim,
            output_dir,
        } => {
            let dir = plain_output_dir(&output_dir)?;
            let emb = extended_ase(&load_graph(&graph)?, dim)?;
            let eig: String = emb
                .eigenvalues()
                .iter()
                .map(|l| format!("{l:.16e}\n"))
                .collect();
            write_outputs(
                &dir,
                &[
                    ("embedding.csv".into(), matrix_csv(emb.z())),
                    ("eigenvalues.csv".into(), eig),
                ],
            )?;
            Ok(Outcome::Success)
        }
        Command::Fit {
            input,
            d,
            k,
            seed,
            output_dir,
        } => {
            let dir = plain_output_dir(&output_dir)?;
            let z = match (&input.graph, input.dim, &input.embedding) {
                (Some(g), Some(dim), _) => extended_ase(&load_graph(g)?, dim)?.into_matrix(),
                (_, _, Some(e)) => read_matrix_csv(e)?,
                _ => {
                    return Err(HarnessError::config(
                        "pass --graph with --dim, or --embedding",
                    ))
                }
            };
            let fit = em_fit(&z, d, k, &SelectionOptions::default().em, seed)?;
            let report = json!({
                "d": d, "K": k, "n": z.nrows(), "dim": z.ncols(),
                "ok": fit.is_ok(), "loglik": fit.loglik, "bic": fit.bic,
                "iterations": fit.n_iter, "converged": fit.converged,
            });
            let mut files = vec![("fit.json".to_string(), format!("{report:#}\n"))];
            if let Some(theta) = &fit.params {
                files.push(("params.json".into(), theta.to_text()));
                files.push(("labels.csv".into(), write_labels(&map_labels(&z, theta)?)));
            }
            write_outputs(&dir, &files)?;
            println!("{report}");
            Ok(if fit.is_ok() {
                Outcome::Success
            } else {
                Outcome::Partial
            })
        }
        Command::Select {
            graph,
            method,
            dim,
            k_max,
            seed,
            labels,
            output_dir,
        } => {
            let dir = plain_output_dir(&output_dir)?;
            let method: Method = method
                .parse()
                .map_err(|e: sms_core::Error| HarnessError::config(e.to_string()))?;
            let emb = extended_ase(&load_graph(&graph)?, dim)?;
            let opts = SelectionOptions {
                seed,
                ..Default::default()
            };
            let z = emb.z();
            let res = match method {
                Method::Sms => sms_embedding(z, k_max, &opts)?,
                Method::SmsReduced => sms_reduced_embedding(z, k_max, &opts)?,
                Method::TwoStep => sms_two_step_embedding(z, k_max, &opts)?,
                Method::BicZg(l) => seq_bic_zg_embedding(z, emb.eigenvalues(), l, k_max, &opts)?,
            };
            let score = match &labels {
                Some(p) => Some(ari(&res.labels, &first_or_named(p, None)?)?),
                None => None,
            };
            let report = json!({
                "method": method.tag(), "d_hat": res.d_hat, "K_hat": res.k_hat, "ari": score,
            });
            write_outputs(
                &dir,
                &[
                    ("grid.csv".into(), res.grid.to_csv()),
                    ("labels.csv".into(), write_labels(&res.labels)),
                    ("result.json".into(), format!("{report:#}\n")),
                ],
            )?;
            println!("{report}");
            Ok(Outcome::Success)
        }
        Command::Ari {
            a,
            b,
            column_a,
            column_b,
        } => {
            let la = first_or_named(&a, column_a.as_deref())?;
            let lb = first_or_named(&b, column_b.as_deref())?;
            println!("{}", num(ari(&la, &lb)?));
            Ok(Outcome::Success)
        }
        Command::Ingest {
            edges,
            labels,
            largest_component,
            output_dir,
        } => {
            let dir = plain_output_dir(&output_dir)?;
            let g = ingest(&edges, labels.as_deref(), largest_component)?;
            write_ingested(&dir, &g)?;
            println!(
                "{}",
                json!({
                    "vertices": g.adjacency.n(), "edges": g.adjacency.num_edges(),
                    "components": g.components, "duplicate_edges": g.duplicate_edges,
                })
            );
            Ok(Outcome::Success)
        }
    }
}
