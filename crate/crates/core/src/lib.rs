//! Methodology inspiration retrieval.
//!
//! Builds a methodology adjacency graph from intent-labelled citations,
//! synthesizes graph-guided triplets, trains a small dense encoder under a
//! triplet-margin objective, ranks literature corpora for research proposals,
//! scores the rankings and re-ranks the head of each ranking with an LLM judge.

pub mod corpus;
pub mod domain;
mod codec;
pub mod elbow;
pub mod encoder;
mod error;
pub mod fixture;
pub mod manifest;
pub mod metrics;
pub mod rerank;
pub mod retrieval;
pub mod rng;
pub mod store;
pub mod train;
pub mod triplet;

pub use error::{Error, Result};
