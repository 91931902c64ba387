//! Token table construction under the three page representation strategies.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

use super::{ReprMode, ReprStrategy};

pub const PAD_TOKEN: &str = "[PAD]";
pub const PAGE_TOKEN: &str = "[PAGE]";

/// The model vocabulary: `[PAD]` at id 0, item tokens next, page tokens
/// last. Token texts are entity names (items, UPID pages), canonical
/// attribute-combination keys (CPID pages) or the `[PAGE]` placeholder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    is_item: Vec<bool>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_item(&self, id: u32) -> bool {
        self.is_item[id as usize]
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn n_items(&self) -> usize {
        self.is_item.iter().filter(|&&b| b).count()
    }

    /// Item token ids in vocabulary order.
    pub fn item_token_ids(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&t| self.is_item(t)).collect()
    }

    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    fn from_parts(tokens: Vec<String>, is_item: Vec<bool>) -> Self {
        let mut v = Self { tokens, is_item, index: HashMap::new() };
        v.reindex();
        v
    }
}

/// Canonical CPID key for an attribute set: the attribute token strings,
/// sorted and joined. Stable across corpora that use different attribute id
/// assignments.
pub fn cpid_key(corpus: &Corpus, attrs: &[u32]) -> String {
    let mut tokens: Vec<&str> =
        attrs.iter().map(|&a| corpus.attribute_vocab.token(a)).collect();
    tokens.sort_unstable();
    format!("cpid:{}", tokens.join("|"))
}

/// Builds the token table for `corpus` under `strategy`. Items are the
/// observed item entities in ascending name order; page tokens follow in
/// ascending order of their name (UPID) or canonical key (CPID), or collapse
/// to the single placeholder (PE).
pub fn build_vocab(corpus: &Corpus, strategy: ReprStrategy) -> Result<Vocab> {
    strategy.validate()?;
    if strategy.mode == ReprMode::Pe && strategy.dense_vec && corpus.dense_dim.is_none() {
        return Err(Error::MissingDenseDim);
    }

    let mut tokens = vec![PAD_TOKEN.to_string()];
    let mut is_item = vec![false];

    for item in corpus.item_ids() {
        tokens.push(item.to_string());
        is_item.push(true);
    }

    match strategy.mode {
        ReprMode::Upid => {
            for page in corpus.page_ids() {
                tokens.push(page.to_string());
                is_item.push(false);
            }
        }
        ReprMode::Cpid => {
            let mut keys = BTreeSet::new();
            for s in &corpus.sessions {
                for e in &s.events {
                    if !e.is_item() {
                        if e.attrs.is_empty() {
                            return Err(Error::PageWithoutAttrs {
                                id: corpus.entity_name(e.entity).to_string(),
                            });
                        }
                        keys.insert(cpid_key(corpus, &e.attrs));
                    }
                }
            }
            for key in keys {
                tokens.push(key);
                is_item.push(false);
            }
        }
        ReprMode::Pe => {
            tokens.push(PAGE_TOKEN.to_string());
            is_item.push(false);
        }
    }

    Ok(Vocab::from_parts(tokens, is_item))
}
