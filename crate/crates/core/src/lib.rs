//! Graph spectral embeddings for implicit-feedback recommendation.

pub mod app;
pub mod baselines;
pub mod config;
pub mod container;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod train;
pub mod tsvd;

pub use error::{Error, Result};
