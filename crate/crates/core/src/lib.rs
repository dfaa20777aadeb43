//! Stress tests for text-generation evaluation metrics.
//!
//! Gold hypotheses are perturbed with controlled noise types, scored under
//! built-in or external metrics, and the scores are checked against the
//! expectation that more noise never scores better than less noise.
//!
//! The crate is organized by stage:
//!
//! * [`corpus`] loads, validates, cleans and persists samples.
//! * [`annotate`] tokenizes and attaches coarse POS / entity labels.
//! * [`perturb`] implements every noise type plus n-gram statistics.
//! * [`distance`] computes token Levenshtein distance and noise-ratios.
//! * [`metrics`] holds the reference-based built-in metrics.
//! * [`adapter`] talks to external metrics over a line protocol.
//! * [`harness`] runs test plans and renders verdicts and reports.
//! * [`attack`] is a greedy adversarial search for metric blind spots.

pub mod adapter;
pub mod annotate;
pub mod attack;
pub mod corpus;
pub mod distance;
pub mod error;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod seed;

pub use error::{Error, Result};

/// Version string embedded in every written artifact.
pub const TOOL_VERSION: &str = concat!("stresslab ", env!("CARGO_PKG_VERSION"));
