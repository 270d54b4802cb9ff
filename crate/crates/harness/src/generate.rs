//! Writing sampled graphs (or mixture samples) and their truth labels.

use std::fmt::Write as _;

use sms_core::gmm::sample_model;
use sms_core::graph::sample_sbm;
use sms_core::io::{matrix_csv, write_edge_list, write_labels};

use crate::config::{Experiment, Source};
use crate::error::{HarnessError, Result};
use crate::output::opt_num;
use crate::pipeline::replicate_seed;

/// One file pair per `(setting, replicate)` plus a `manifest.csv`. Seeds are
/// the pipeline's, so `generate` reproduces the pipeline's inputs exactly.
pub fn generate_files(exp: &Experiment) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    let mut manifest = String::from("setting,n,p,replicate,seed,data,labels\n");
    for s in &exp.settings {
        for r in 0..exp.replicates {
            let seed = replicate_seed(exp.seed, s.index, r);
            let stem = format!("s{}_r{}", s.index, r);
            let labels_name = format!("labels_{stem}.csv");
            let (data_name, data, labels) = match &exp.source {
                Source::Sbm => {
                    let params = s.sbm.as_ref().expect("sbm settings carry parameters");
                    let (tau, a) = sample_sbm(s.n, params, seed)?;
                    (
                        format!("graph_{stem}.txt"),
                        write_edge_list(&a),
                        tau.into_inner(),
                    )
                }
                Source::Gmm(theta) => {
                    let (labels, z) = sample_model(theta, s.n, seed)?;
                    (format!("sample_{stem}.csv"), matrix_csv(&z), labels)
                }
                Source::Graph(_) => {
                    return Err(HarnessError::config("generate needs an sbm or gmm model"));
                }
            };
            let _ = writeln!(
                manifest,
                "{},{},{},{r},{seed},{data_name},{labels_name}",
                s.index,
                s.n,
                opt_num(s.p)
            );
            files.push((data_name, data));
            files.push((labels_name, write_labels(&labels)));
        }
    }
    files.push(("manifest.csv".into(), manifest));
    Ok(files)
}
