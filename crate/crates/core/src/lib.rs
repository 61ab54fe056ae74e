//! Causal-graph anomaly detection for multivariate time series.
//!
//! The workflow has three stages:
//!
//! 1. [`causal`] builds a weighted directed graph from pairwise transfer
//!    entropy between sensors.
//! 2. [`forecaster`] trains a graph + temporal convolutional single-step
//!    forecaster on anomaly-free data.
//! 3. [`scoring`] turns forecast errors into robust per-sensor scores, a
//!    collective score and binary decisions with an extreme-value threshold.
//!
//! [`evaluation`] computes point-wise, composite and point-adjusted F1, and
//! [`pipeline`] wires everything into the `cgad` command-line workflow.

pub mod causal;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod pipeline;
pub mod scoring;
pub mod series;

pub use error::{CgadError, Result};
