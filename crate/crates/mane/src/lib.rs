//! Manifold-aligned neighbor embedding: joint low-dimensional embedding of
//! multiple high-dimensional datasets that share a seed subset, with the
//! shared points hard-constrained to identical coordinates across all
//! embeddings. Includes the UMAP-style graph construction, the constrained
//! negative-sampling optimizer, embedding quality metrics, and an experiment
//! harness.

pub mod data;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod init;
pub mod kernel;
pub mod metrics;
pub mod optim;
pub mod plot;

pub use error::{ManeError, Result};
