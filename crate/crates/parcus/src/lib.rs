//! PARCUS: prototype-based concept matching for low-resource classification.
//!
//! The model learns prototype vectors matched against token embeddings
//! through a gated cosine similarity, combines the matching probabilities
//! with logic features in a linear per-token head, aggregates per document
//! and boosts annotated tokens' errors during training. The crate also
//! ships the reference baselines (linear, MLP, bag of embeddings), the
//! ablation variants, a multi-split evaluation protocol and introspection
//! tools, all driven by one deterministic trainer.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod introspect;
pub mod linalg;
pub mod matching;
pub mod model;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
