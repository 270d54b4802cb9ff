//! Experiment description files.
//!
//! One TOML file describes one experiment:
//!
//! ```toml
//! seed = 7
//! replicates = 100
//! dim = 6
//! k_max = 6
//! methods = ["sms", "sms-reduced", "bic-zg-1"]
//! n = [200, 500]
//! output_dir = "out/two-block"
//! threads = 4
//!
//! [model]
//! kind = "sbm"
//! preset = "two-block"
//!
//! [em]
//! restarts = 5
//! ```
//!
//! `model.kind` is one of `sbm` (a `preset` of `two-block`, `three-block` or
//! `two-block-sweep` with a `sweep` list of between-block probabilities, or
//! explicit `b` and `pi`), `gmm` (a `params` file written by
//! [`ConstrainedGmmParams::to_text`]) or `edge-list` (`edges`, optional
//! `labels`, optional `largest_component`). Relative paths are resolved
//! against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::SVD;
use serde::{Deserialize, Serialize};
use sms_core::gmm::{ConstrainedGmmParams, EmOptions};
use sms_core::graph::SbmParams;
use sms_core::selection::Method;

use crate::error::{HarnessError, Result};
use crate::ingest::{ingest, IngestedGraph};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SMS_OUTPUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Embedding dimension `D`. Optional for `gmm` models, where it is the
    /// dimension of the parameter file.
    pub dim: Option<usize>,
    pub k_max: usize,
    pub methods: Vec<String>,
    /// Vertex or sample counts; ignored for `edge-list` models.
    #[serde(default)]
    pub n: NGrid,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    pub threads: Option<usize>,
    /// Adds wall-clock runtimes to the records. Timings differ between runs,
    /// so this breaks byte-for-byte reproducibility of `records.csv`.
    #[serde(default)]
    pub record_timing: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub obsstats: ObsStatsConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NGrid {
    #[default]
    Unset,
    One(usize),
    Many(Vec<usize>),
}

impl NGrid {
    pub fn values(&self) -> Vec<usize> {
        match self {
            NGrid::Unset => Vec::new(),
            NGrid::One(n) => vec![*n],
            NGrid::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Sbm {
        preset: Option<String>,
        b: Option<Vec<Vec<f64>>>,
        pi: Option<Vec<f64>>,
        sweep: Option<Vec<f64>>,
    },
    Gmm {
        params: PathBuf,
    },
    EdgeList {
        edges: PathBuf,
        labels: Option<PathBuf>,
        #[serde(default)]
        largest_component: bool,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub ridge: Option<f64>,
    pub sigma2_floor: Option<f64>,
    pub kmeans_iter: Option<usize>,
}

impl EmConfig {
    pub fn options(&self) -> EmOptions {
        let d = EmOptions::default();
        EmOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            restarts: self.restarts.unwrap_or(d.restarts),
            ridge: self.ridge.unwrap_or(d.ridge),
            sigma2_floor: self.sigma2_floor.unwrap_or(d.sigma2_floor),
            kmeans_iter: self.kmeans_iter.unwrap_or(d.kmeans_iter),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsStatsConfig {
    /// Informative dimension; the rank of `B` when absent.
    pub d: Option<usize>,
    /// Multiply variances by `n`.
    #[serde(default)]
    pub scale_by_n: bool,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub n: Option<Vec<usize>>,
    pub dim: Option<usize>,
    pub k_max: Option<usize>,
    pub methods: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.model {
            ModelConfig::Sbm { .. } => {}
            ModelConfig::Gmm { params } => fix(params),
            ModelConfig::EdgeList { edges, labels, .. } => {
                fix(edges);
                if let Some(l) = labels {
                    fix(l);
                }
            }
        }
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.replicates {
            self.replicates = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = Some(v.clone());
        }
        if let Some(v) = &o.n {
            self.n = NGrid::Many(v.clone());
        }
        if let Some(v) = o.dim {
            self.dim = Some(v);
        }
        if let Some(v) = o.k_max {
            self.k_max = v;
        }
        if let Some(v) = &o.methods {
            self.methods = v.clone();
        }
    }

    /// Output directory: the config (or flag) value, then the environment.
    pub fn output_dir(&self) -> Result<PathBuf> {
        if let Some(p) = &self.output_dir {
            return Ok(p.clone());
        }
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| {
                HarnessError::config(format!(
                    "no output directory: set output_dir, --output-dir or {OUTPUT_DIR_ENV}"
                ))
            })
    }

    /// Validates the config and loads every referenced file.
    pub fn resolve(&self) -> Result<Experiment> {
        if self.replicates == 0 {
            return Err(HarnessError::config("replicates must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(HarnessError::config("k_max must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::config("threads must be at least 1"));
        }
        let methods = self
            .methods
            .iter()
            .map(|m| {
                m.parse::<Method>()
                    .map_err(|e| HarnessError::config(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return Err(HarnessError::config(format!("method '{m}' listed twice")));
            }
        }
        let ns = self.n.values();
        if ns.contains(&0) {
            return Err(HarnessError::config("n must be at least 1"));
        }

        let (source, settings, dim) = match &self.model {
            ModelConfig::Sbm {
                preset,
                b,
                pi,
                sweep,
            } => {
                if ns.is_empty() {
                    return Err(HarnessError::config("n is required for sbm models"));
                }
                let variants = sbm_variants(preset.as_deref(), b, pi, sweep)?;
                let settings = variants
                    .into_iter()
                    .flat_map(|(p, params)| {
                        ns.iter()
                            .map(move |&n| (p, params.clone(), n))
                            .collect::<Vec<_>>()
                    })
                    .enumerate()
                    .map(|(index, (p, params, n))| Setting {
                        index,
                        n,
                        p,
                        sbm: Some(params),
                    })
                    .collect();
                (Source::Sbm, settings, self.dim)
            }
            ModelConfig::Gmm { params } => {
                let text = fs::read_to_string(params).map_err(|e| HarnessError::io(params, e))?;
                let theta = ConstrainedGmmParams::from_text(&text)
                    .map_err(|e| HarnessError::config(format!("{}: {e}", params.display())))?;
                if self.dim.is_some_and(|d| d != theta.dim()) {
                    return Err(HarnessError::config(format!(
                        "dim {} does not match the parameter file's dimension {}",
                        self.dim.unwrap_or(0),
                        theta.dim()
                    )));
                }
                if let Some(m) = methods.iter().find(|m| matches!(m, Method::BicZg(_))) {
                    return Err(HarnessError::config(format!(
                        "method '{m}' needs a graph spectrum and cannot run on mixture samples"
                    )));
                }
                if ns.is_empty() {
                    return Err(HarnessError::config("n is required for gmm models"));
                }
                let dim = Some(theta.dim());
                let settings = ns
                    .iter()
                    .enumerate()
                    .map(|(index, &n)| Setting {
                        index,
                        n,
                        p: None,
                        sbm: None,
                    })
                    .collect();
                (Source::Gmm(theta), settings, dim)
            }
            ModelConfig::EdgeList {
                edges,
                labels,
                largest_component,
            } => {
                let g = ingest(edges, labels.as_deref(), *largest_component)?;
                let settings = vec![Setting {
                    index: 0,
                    n: g.adjacency.n(),
                    p: None,
                    sbm: None,
                }];
                (Source::Graph(Box::new(g)), settings, self.dim)
            }
        };
        Ok(Experiment {
            seed: self.seed,
            replicates: self.replicates,
            dim,
            k_max: self.k_max,
            methods,
            threads: self.threads,
            record_timing: self.record_timing,
            em: self.em.options(),
            obsstats: self.obsstats.clone(),
            source,
            settings,
        })
    }
}

fn sbm_variants(
    preset: Option<&str>,
    b: &Option<Vec<Vec<f64>>>,
    pi: &Option<Vec<f64>>,
    sweep: &Option<Vec<f64>>,
) -> Result<Vec<(Option<f64>, SbmParams)>> {
    let bad = |e: sms_core::Error| HarnessError::config(e.to_string());
    match (preset, b, pi) {
        (Some(name), None, None) => match name {
            "two-block" | "three-block" if sweep.is_some() => Err(HarnessError::config(
                "sweep is only valid with preset 'two-block-sweep'",
            )),
            "two-block" => Ok(vec![(None, SbmParams::two_block())]),
            "three-block" => Ok(vec![(None, SbmParams::three_block())]),
            "two-block-sweep" => {
                let ps = sweep.as_ref().filter(|v| !v.is_empty()).ok_or_else(|| {
                    HarnessError::config("preset 'two-block-sweep' needs a sweep list")
                })?;
                ps.iter()
                    .map(|&p| Ok((Some(p), SbmParams::two_block_sweep(p).map_err(bad)?)))
                    .collect()
            }
            other => Err(HarnessError::config(format!(
                "unknown sbm preset '{other}'"
            ))),
        },
        (None, Some(b), Some(pi)) => {
            if sweep.is_some() {
                return Err(HarnessError::config(
                    "sweep is only valid with preset 'two-block-sweep'",
                ));
            }
            Ok(vec![(
                None,
                SbmParams::from_rows(b, pi.clone()).map_err(bad)?,
            )])
        }
        _ => Err(HarnessError::config(
            "sbm model needs either a preset or both b and pi",
        )),
    }
}

/// Where the graphs (or embeddings) of each replicate come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// A fresh SBM sample per replicate; parameters live on the setting.
    Sbm,
    /// Samples drawn directly from a constrained mixture; no graph.
    Gmm(ConstrainedGmmParams),
    /// One fixed graph; replicates differ only in fitting seeds.
    Graph(Box<IngestedGraph>),
}

/// One point of the experiment's parameter grid.
#[derive(Debug, Clone)]
pub struct Setting {
    pub index: usize,
    pub n: usize,
    /// Between-block probability of a sweep.
    pub p: Option<f64>,
    pub sbm: Option<SbmParams>,
}

/// A validated experiment with all inputs loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub seed: u64,
    pub replicates: usize,
    /// Embedding dimension `D`; only sampling works without it.
    pub dim: Option<usize>,
    pub k_max: usize,
    pub methods: Vec<Method>,
    pub threads: Option<usize>,
    pub record_timing: bool,
    pub em: EmOptions,
    pub obsstats: ObsStatsConfig,
    pub source: Source,
    pub settings: Vec<Setting>,
}

impl Experiment {
    /// Checks that `D` is set and fits every setting, returning it.
    pub fn embedding_dim(&self) -> Result<usize> {
        let dim = self
            .dim
            .ok_or_else(|| HarnessError::config("dim is required"))?;
        if dim == 0 {
            return Err(HarnessError::config("dim must be at least 1"));
        }
        if let Some(s) = self.settings.iter().find(|s| s.n < dim) {
            return Err(HarnessError::config(format!(
                "dim {dim} exceeds n = {}",
                s.n
            )));
        }
        Ok(dim)
    }

    /// Names of the truth labelings scored by ARI.
    pub fn truth_names(&self) -> Vec<String> {
        match &self.source {
            Source::Sbm | Source::Gmm(_) => vec!["truth".into()],
            Source::Graph(g) => g.truths.iter().map(|(name, _)| name.clone()).collect(),
        }
    }

    /// True `(d, K)` of a setting, when the generating model is known.
    pub fn truth_dims(&self, setting: &Setting) -> Option<(usize, usize)> {
        match &self.source {
            Source::Sbm => setting
                .sbm
                .as_ref()
                .map(|p| (numerical_rank(p), p.num_blocks())),
            Source::Gmm(theta) => Some((theta.d(), theta.k())),
            Source::Graph(_) => None,
        }
    }
}

/// Rank of `B`, counting singular values above `k * eps * s_max`.
pub fn numerical_rank(params: &SbmParams) -> usize {
    let b = params.b();
    let svd = SVD::new(b.clone(), false, false);
    let smax = svd.singular_values.max();
    let tol = b.nrows() as f64 * f64::EPSILON * smax;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}
