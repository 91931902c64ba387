//! Sequential next-item models with a pluggable non-item fusion embedding
//! layer.
//!
//! Non-item pages enter the models through one of three representations:
//! a unique token per page (UPID), a shared token per attribute combination
//! (CPID), or a single placeholder token whose content arrives through an
//! attribute multi-hot and/or a dense vector mapped into the hidden space
//! (PE). The per-position input is the sum of id, attribute, representation
//! and positional embeddings; two trainable backends (causal self-attention
//! and stacked GRUs) consume it. All math is `f64` and single-threaded, so
//! fixed seeds reproduce training bit for bit.

mod attention;
mod checkpoint;
mod encode;
mod gru;
mod model;
mod params;
mod predict;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encode::{EncodedBatch, Encoder};
pub use model::{embed_input, forward, loss, loss_and_grad};
pub use params::{
    BackendConfig, EncoderParams, ModelDims, ModelParams, TrainConfig,
};
pub use predict::predict_topk;
pub use train::{train, EpochLog};
pub use vocab::{build_vocab, cpid_key, Vocab, PAD_TOKEN, PAGE_TOKEN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How non-item pages are represented in the vocabulary and input encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprMode {
    /// One token per distinct page id.
    Upid,
    /// One token per distinct page attribute combination.
    Cpid,
    /// One shared placeholder token; content enters via multi-hot/dense
    /// channels.
    Pe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReprStrategy {
    pub mode: ReprMode,
    /// PE source: multi-hot of the page's attributes.
    pub attr_multihot: bool,
    /// PE source: the page's dense vector.
    pub dense_vec: bool,
    /// Also feed item attributes into the multi-hot channel (off by
    /// default; pages are the signal of interest).
    pub include_item_attrs: bool,
}

impl ReprStrategy {
    pub fn upid() -> Self {
        Self { mode: ReprMode::Upid, attr_multihot: false, dense_vec: false, include_item_attrs: false }
    }

    pub fn cpid() -> Self {
        Self { mode: ReprMode::Cpid, attr_multihot: false, dense_vec: false, include_item_attrs: false }
    }

    pub fn pe(attr_multihot: bool, dense_vec: bool) -> Self {
        Self { mode: ReprMode::Pe, attr_multihot, dense_vec, include_item_attrs: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == ReprMode::Pe && !self.attr_multihot && !self.dense_vec {
            return Err(Error::EmptyPeSources);
        }
        Ok(())
    }
}
