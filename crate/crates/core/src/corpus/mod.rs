//! Session corpus model: users, sessions of item/non-item interactions,
//! attribute vocabulary, and the preprocessing pipeline applied before
//! hypothesis testing and model training.

mod io;
mod list_pages;
mod preprocess;
mod split;
mod stats;

pub use io::{load_sessions, write_jsonl, RawInteraction, RawKind, RawSession};
pub use list_pages::{derive_list_page_features, ListPageMode};
pub use preprocess::{preprocess, PreprocessConfig};
pub use split::{split, SplitCorpora, SplitStrategy};
pub use stats::{stats, CorpusStats};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether an interaction hits an item page or a non-item page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    Item,
    NonItem,
}

/// Ordered attribute strings (e.g. `genre:Comedy`, `category:shoes`) with a
/// bijective token <-> id mapping. Ids are dense in `[0, len)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttributeVocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl AttributeVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the token index; needed after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut v = Self { tokens, index: HashMap::new() };
        v.reindex();
        v
    }

    /// Returns the id for `token`, interning it if unseen.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Interned entity ids. Every item or page id observed in a corpus maps to a
/// dense `u32`; the kind is fixed at first sight and a later appearance with
/// the other kind is an error.
#[derive(Debug, Clone, Default)]
pub struct EntityTable {
    names: Vec<String>,
    kinds: Vec<InteractionKind>,
    index: HashMap<String, u32>,
}

impl EntityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str, kind: InteractionKind) -> Result<u32> {
        if let Some(&id) = self.index.get(name) {
            if self.kinds[id as usize] != kind {
                return Err(Error::KindConflict { id: name.to_string() });
            }
            return Ok(id);
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn kind(&self, id: u32) -> InteractionKind {
        self.kinds[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One event in a session. Entity and attribute ids are interned against the
/// owning [`Corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub entity: u32,
    /// Attribute ids, sorted ascending (set semantics).
    pub attrs: Box<[u32]>,
    /// Optional dense representation (e.g. an embedded search query).
    pub dense_vec: Option<Box<[f64]>>,
    /// Item entity ids shown on a list page; always `None` for items.
    pub list_items: Option<Box<[u32]>>,
    pub timestamp: i64,
}

impl Interaction {
    pub fn is_item(&self) -> bool {
        self.kind == InteractionKind::Item
    }
}

/// A user's chronological interaction sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user_id: String,
    pub events: Vec<Interaction>,
}

/// A set of sessions plus the vocabularies they are interned against.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    pub attribute_vocab: AttributeVocab,
    pub entities: EntityTable,
    pub dense_dim: Option<usize>,
}

impl Corpus {
    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn entity_name(&self, id: u32) -> &str {
        self.entities.name(id)
    }

    /// Distinct item ids observed in events, in ascending name order.
    pub fn item_ids(&self) -> Vec<&str> {
        self.observed_ids(InteractionKind::Item)
    }

    /// Distinct page ids observed in events, in ascending name order.
    pub fn page_ids(&self) -> Vec<&str> {
        self.observed_ids(InteractionKind::NonItem)
    }

    fn observed_ids(&self, kind: InteractionKind) -> Vec<&str> {
        let mut seen = vec![false; self.entities.len()];
        for s in &self.sessions {
            for e in &s.events {
                if e.kind == kind {
                    seen[e.entity as usize] = true;
                }
            }
        }
        let mut names: Vec<&str> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| self.entities.name(i as u32))
            .collect();
        names.sort_unstable();
        names
    }

    /// The items-only counterpart of this corpus: every non-item event is
    /// dropped and the entity table compacted. Sessions left empty are
    /// removed.
    pub fn without_pages(&self) -> Corpus {
        let mut out = self.clone();
        for s in &mut out.sessions {
            s.events.retain(|e| e.is_item());
        }
        out.sessions.retain(|s| !s.events.is_empty());
        out.compact();
        out
    }

    /// Rebuilds the entity table from the events actually present, remapping
    /// event and list-item ids. Keeps first-appearance order.
    pub fn compact(&mut self) {
        let mut remap: Vec<Option<u32>> = vec![None; self.entities.len()];
        let mut table = EntityTable::new();
        {
            let map = |id: u32, remap: &mut Vec<Option<u32>>, table: &mut EntityTable| {
                if remap[id as usize].is_none() {
                    let new = table
                        .intern(self.entities.name(id), self.entities.kind(id))
                        .expect("kinds are consistent within a table");
                    remap[id as usize] = Some(new);
                }
            };
            for s in &self.sessions {
                for e in &s.events {
                    map(e.entity, &mut remap, &mut table);
                    if let Some(items) = &e.list_items {
                        for &i in items.iter() {
                            map(i, &mut remap, &mut table);
                        }
                    }
                }
            }
        }
        for s in &mut self.sessions {
            for e in &mut s.events {
                e.entity = remap[e.entity as usize].unwrap();
                if let Some(items) = &mut e.list_items {
                    for i in items.iter_mut() {
                        *i = remap[*i as usize].unwrap();
                    }
                }
            }
        }
        self.entities = table;
    }
}

/// Incrementally builds a corpus from raw (string-keyed) sessions, interning
/// entities and attributes in encounter order.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    corpus: Corpus,
}

impl CorpusBuilder {
    pub fn new(dense_dim: Option<usize>) -> Self {
        Self {
            corpus: Corpus { dense_dim, ..Default::default() },
        }
    }

    pub fn push_raw(&mut self, raw: RawSession) -> Result<()> {
        let c = &mut self.corpus;
        let mut events = Vec::with_capacity(raw.events.len());
        for ev in raw.events {
            let kind = match ev.kind {
                RawKind::Item => InteractionKind::Item,
                RawKind::Page => InteractionKind::NonItem,
            };
            let entity = c.entities.intern(&ev.id, kind)?;
            let mut attrs: Vec<u32> = ev
                .attrs
                .unwrap_or_default()
                .iter()
                .map(|a| c.attribute_vocab.intern(a))
                .collect();
            attrs.sort_unstable();
            attrs.dedup();
            if let Some(v) = &ev.vec {
                match c.dense_dim {
                    Some(d) if v.len() != d => {
                        return Err(Error::DenseDimMismatch {
                            id: ev.id.clone(),
                            got: v.len(),
                            expected: d,
                        })
                    }
                    None => {
                        // First dense vector fixes the corpus dimension.
                        c.dense_dim = Some(v.len());
                    }
                    _ => {}
                }
            }
            let list_items = match ev.list_items {
                None => None,
                Some(items) => {
                    let mut ids = Vec::with_capacity(items.len());
                    for it in &items {
                        ids.push(c.entities.intern(it, InteractionKind::Item)?);
                    }
                    Some(ids.into_boxed_slice())
                }
            };
            events.push(Interaction {
                kind,
                entity,
                attrs: attrs.into_boxed_slice(),
                dense_vec: ev.vec.map(Vec::into_boxed_slice),
                list_items,
                timestamp: ev.t,
            });
        }
        // Establish the non-decreasing timestamp invariant; stable, so
        // equal-timestamp events keep their recorded order.
        events.sort_by_key(|e| e.timestamp);
        c.sessions.push(Session { user_id: raw.user, events });
        Ok(())
    }

    pub fn finish(self) -> Corpus {
        self.corpus
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Shorthand: `ev("item", "v1", &["a"], 3)`.
    pub fn ev(kind: &str, id: &str, attrs: &[&str], t: i64) -> RawInteraction {
        RawInteraction {
            t,
            kind: if kind == "item" { RawKind::Item } else { RawKind::Page },
            id: id.to_string(),
            attrs: if attrs.is_empty() {
                None
            } else {
                Some(attrs.iter().map(|s| s.to_string()).collect())
            },
            vec: None,
            list_items: None,
        }
    }

    pub fn corpus_of(sessions: Vec<(&str, Vec<RawInteraction>)>) -> Corpus {
        let mut b = CorpusBuilder::new(None);
        for (user, events) in sessions {
            b.push_raw(RawSession { user: user.to_string(), events })
                .unwrap();
        }
        b.finish()
    }

    /// Entity names of a session's events, for compact assertions.
    pub fn names(c: &Corpus, s: usize) -> Vec<&str> {
        c.sessions[s].events.iter().map(|e| c.entity_name(e.entity)).collect()
    }
}
