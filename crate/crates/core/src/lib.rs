//! Core library for studying non-item pages in session-based recommendation:
//! corpus ingestion and preprocessing, synthetic dataset generation,
//! Bayesian transition-hypothesis comparison, fusion-embedding sequence
//! models with two trainable backends, ranking evaluation and item-embedding
//! similarity analysis.

pub mod corpus;
pub mod embanalysis;
pub mod error;
pub mod evalharness;
pub mod hyptrails;
pub mod seqmodel;
pub mod synthgen;

pub use error::{Error, Result};
