//! Graph classification with an injective concatenation-based graph
//! convolution and layer-wise sort pooling, built on a small reverse-mode
//! autodiff engine.
//!
//! Module map:
//!
//! - [`tensor`], [`autodiff`], [`params`]: dense matrices and the tape.
//! - [`graph`]: graphs, TU-format ingestion, folds, statistics.
//! - [`conv`]: Cat-Agg, GIN and normalised-adjacency convolutions.
//! - [`pool`]: WL-SortPool, SortPool and sum readout.
//! - [`readout`]: the 1-D CNN classification head.
//! - [`model`]: assembled networks and their configuration.
//! - [`train`]: Adam, epochs, cross-validation and reports.
//! - [`wl`]: 1-WL colour refinement and permutation utilities.

pub mod autodiff;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod nn;
pub mod params;
pub mod pool;
pub mod readout;
pub mod tensor;
pub mod train;
pub mod wl;

pub use error::{Error, Result};
pub use tensor::Tensor;
