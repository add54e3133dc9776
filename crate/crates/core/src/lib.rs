//! Gender-bias auditing for knowledge graphs.
//!
//! The pipeline ingests a triple corpus, slices it into demographies, trains
//! TransE / ComplEx / DistMult embeddings on the merged graph, and compares a
//! counting-based data-bias score against a gradient-perturbation
//! embedding-bias score across models and demographies.

pub mod analytics;
pub mod audit;
pub mod bias;
pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod report;
pub mod seed;
pub mod slice;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
