//! Exact topology learning for radial, bidirectional linear dynamical
//! networks observed through possibly corrupted data streams.
//!
//! The pipeline is:
//!
//! 1. estimate (or compute analytically) the power spectral density of the
//!    observed streams and invert it per frequency ([`spectral`]);
//! 2. read off the support graph, find the nodes whose neighbourhood is a
//!    clique and split them into corrupt nodes and leaves with a phase test
//!    ([`detection`]);
//! 3. hide the corrupt streams, prune spurious edges among the observed nodes
//!    with two-vertex separation, and splice the corrupt nodes back in
//!    ([`reconstruction`]).
//!
//! [`model`] simulates the generative system and provides its exact spectra,
//! [`corruption`] applies random delays, packet drops and noisy filtering to
//! clean streams, and [`experiment`] ties everything into reproducible runs.

pub mod corruption;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod model;
pub mod panel;
pub mod reconstruction;
pub mod spectral;

pub use corruption::{CorruptionKind, CorruptionSignature, CorruptionSpec};
pub use detection::{DetectionReport, EdgeDecisionParams};
pub use error::{Error, ErrorClass, Result};
pub use graph::{NodeSet, UndirectedGraph};
pub use model::GenerativeModel;
pub use panel::TimeSeriesPanel;
pub use reconstruction::TopologyEstimate;
pub use spectral::{FrequencyGrid, SpectralMatrix, WelchParams};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
