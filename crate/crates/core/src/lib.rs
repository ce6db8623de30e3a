//! End-to-end entity resolution for record linkage, with automatic
//! configuration of the pipeline.
//!
//! The pipeline embeds both entity collections, indexes the first one, queries
//! it with every entity of the second one for its `k` nearest neighbors, turns
//! the candidates into a weighted bipartite graph, prunes it at a similarity
//! threshold and clusters it. [`tune`] searches the configuration space when
//! ground truth is available; [`predict`] recommends a configuration for a
//! dataset without ground truth from a regression model trained on others.

pub mod cluster;
pub mod datamodel;
pub mod embed;
pub mod error;
pub mod ingest;
pub mod knn;
pub mod pipeline;
pub mod predict;
pub mod profile;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
