//! Adaptive DBSCAN parameter search.
//!
//! A dataset is turned into a weighted k-NN graph, split into density
//! partitions through a two-level encoding tree, and each partition gets an
//! agent that searches DBSCAN parameters layer by layer with a TD3 learner.

pub mod dataset;
pub mod dbscan;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod search;
pub mod tree;

pub use error::{Error, Result};
