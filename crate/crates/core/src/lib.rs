//! Spectral vertex clustering with simultaneous selection of the embedding
//! dimension and the number of clusters.
//!
//! The pipeline is: embed the adjacency matrix to a fixed, deliberately large
//! dimension `D` ([`spectral::extended_ase`]), fit a Gaussian mixture whose
//! trailing `D - d` coordinates are zero-mean and spherical per component
//! ([`gmm::em_fit`]) for every `(d, K)` on a grid, and keep the pair with the
//! largest BIC ([`selection`]). Samplers ([`graph`]), a sequential
//! elbow-then-BIC baseline ([`baselines`]) and evaluation helpers
//! ([`metrics`]) round out the toolkit.
//!
//! Cluster and block labels are 0-based everywhere inside the library. File
//! exports in [`io`] write them 1-based.

pub mod baselines;
pub mod error;
pub mod gmm;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod selection;
pub mod spectral;

pub use error::{Error, Result};
