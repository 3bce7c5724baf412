//! Instability analysis for evaluation sets scored across repeated training
//! runs.
//!
//! The input is a [`PredictionTensor`]: per-example scores for every run
//! (seed) and checkpoint. From it the crate computes trajectory bands, the
//! split of accuracy variance into per-example variance and inter-example
//! covariance, rank correlations between datasets and between examples, and
//! re-split checkpoint selection. [`synth`] generates tensors with known
//! moments; [`report`] renders tables and SVG figures.

pub mod error;
pub mod excorr;
pub mod numeric;
pub mod rank;
pub mod report;
pub mod selection;
pub mod stats;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use store::{CheckpointIndex, DatasetKind, DatasetMeta, FinalSlice, PredictionTensor, RunId};
