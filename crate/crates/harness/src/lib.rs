//! Experiment orchestration for `sms-core`: TOML experiment files, replicated
//! Monte Carlo runs with deterministic seeding, graph ingestion and the CSV
//! and JSON outputs consumed by downstream plotting.

pub mod cli;
pub mod config;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod obsstats;
pub mod output;
pub mod pipeline;

pub use error::{HarnessError, Result};
