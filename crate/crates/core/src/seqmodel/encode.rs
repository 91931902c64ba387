//! Turning sessions into left-padded, token/attribute/dense model inputs.

use crate::corpus::{Corpus, Interaction, Session};
use crate::error::{Error, Result};

use super::{cpid_key, ReprMode, ReprStrategy, Vocab, PAGE_TOKEN};

/// A batch of encoded sequences in slot-major layout (`b * n + t`).
///
/// Sequences are left-padded so the most recent interaction sits at slot
/// `n - 1`. Attribute ids are stored sparsely (CSR over slots); the dense
/// channel is materialized only when the strategy uses it. `target_ids` and
/// `loss_mask` are all zero for inference batches.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub batch: usize,
    pub n: usize,
    pub n_attrs: usize,
    pub dense_dim: usize,
    pub token_ids: Vec<u32>,
    pub positions: Vec<u32>,
    /// CSR offsets into `attr_indices`, length `batch * n + 1`.
    pub attr_offsets: Vec<u32>,
    pub attr_indices: Vec<u32>,
    /// Row-major `batch * n * dense_dim`, or empty when unused.
    pub dense_reps: Vec<f64>,
    pub target_ids: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

impl EncodedBatch {
    pub fn slots(&self) -> usize {
        self.batch * self.n
    }

    pub fn attrs_at(&self, slot: usize) -> &[u32] {
        let lo = self.attr_offsets[slot] as usize;
        let hi = self.attr_offsets[slot + 1] as usize;
        &self.attr_indices[lo..hi]
    }

    pub fn dense_at(&self, slot: usize) -> Option<&[f64]> {
        if self.dense_dim == 0 {
            return None;
        }
        let row = &self.dense_reps[slot * self.dense_dim..(slot + 1) * self.dense_dim];
        row.iter().any(|&x| x != 0.0).then_some(row)
    }

    pub fn n_masked(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Dense multi-hot row for one slot (test and inspection helper).
    pub fn multihot_at(&self, slot: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_attrs];
        for &a in self.attrs_at(slot) {
            row[a as usize] = 1.0;
        }
        row
    }
}

/// Encodes sessions of one corpus against a fixed vocabulary and strategy.
///
/// Entities without a vocabulary token (possible when encoding evaluation
/// data against a train-built vocabulary) map to `[PAD]` as input; as
/// targets they are masked from the loss.
pub struct Encoder<'a> {
    corpus: &'a Corpus,
    vocab: &'a Vocab,
    strategy: ReprStrategy,
    n: usize,
    train_on_non_item_targets: bool,
    token_of_entity: Vec<Option<u32>>,
}

impl<'a> Encoder<'a> {
    pub fn new(
        corpus: &'a Corpus,
        vocab: &'a Vocab,
        strategy: ReprStrategy,
        n: usize,
        train_on_non_item_targets: bool,
    ) -> Result<Self> {
        strategy.validate()?;
        assert!(n >= 2, "sequence length must be at least 2");
        let mut token_of_entity = vec![None; corpus.entities.len()];
        for (id, slot) in token_of_entity.iter_mut().enumerate() {
            let name = corpus.entities.name(id as u32);
            *slot = match corpus.entities.kind(id as u32) {
                crate::corpus::InteractionKind::Item => vocab.lookup(name),
                crate::corpus::InteractionKind::NonItem => match strategy.mode {
                    ReprMode::Upid => vocab.lookup(name),
                    // CPID tokens depend on event attributes, resolved per event.
                    ReprMode::Cpid => None,
                    ReprMode::Pe => vocab.lookup(PAGE_TOKEN),
                },
            };
        }
        Ok(Self { corpus, vocab, strategy, n, train_on_non_item_targets, token_of_entity })
    }

    fn token_of(&self, event: &Interaction) -> u32 {
        if !event.is_item() && self.strategy.mode == ReprMode::Cpid {
            return self
                .vocab
                .lookup(&cpid_key(self.corpus, &event.attrs))
                .unwrap_or(0);
        }
        self.token_of_entity[event.entity as usize].unwrap_or(0)
    }

    /// Whether this event contributes to the attribute multi-hot channel.
    fn carries_attrs(&self, event: &Interaction) -> bool {
        if event.attrs.is_empty() {
            return false;
        }
        if event.is_item() {
            self.strategy.include_item_attrs
        } else {
            self.strategy.mode == ReprMode::Pe && self.strategy.attr_multihot
        }
    }

    fn carries_dense(&self, event: &Interaction) -> bool {
        !event.is_item()
            && self.strategy.mode == ReprMode::Pe
            && self.strategy.dense_vec
            && event.dense_vec.is_some()
    }

    fn dense_dim(&self) -> usize {
        if self.strategy.mode == ReprMode::Pe && self.strategy.dense_vec {
            self.corpus.dense_dim.unwrap_or(0)
        } else {
            0
        }
    }

    /// Encodes full sessions for training: each session is truncated to its
    /// last `n + 1` interactions, inputs are all but the final event, the
    /// target at slot `t` is the token at `t + 1`. A target is masked unless
    /// it is an item or non-item targets are enabled.
    pub fn encode_batch(&self, sessions: &[&Session]) -> Result<EncodedBatch> {
        let mut batch = self.empty_batch(sessions.len());
        for (b, session) in sessions.iter().enumerate() {
            let events = tail(&session.events, self.n + 1);
            if events.len() < 2 {
                return Err(Error::SessionTooShort { user: session.user_id.clone() });
            }
            let inputs = &events[..events.len() - 1];
            let pad = self.n - inputs.len();
            for (i, event) in inputs.iter().enumerate() {
                let slot = b * self.n + pad + i;
                let target = &events[i + 1];
                let target_token = self.token_of(target);
                batch.target_ids[slot] = target_token;
                batch.loss_mask[slot] = target_token != 0
                    && (target.is_item() || self.train_on_non_item_targets);
                self.fill_slot(&mut batch, slot, event);
            }
            self.close_rows(&mut batch, b);
        }
        Ok(batch)
    }

    /// Encodes bare prefixes for inference: no targets, the last prefix
    /// event lands on the final slot.
    pub fn encode_prefixes(&self, prefixes: &[&[Interaction]]) -> Result<EncodedBatch> {
        let mut batch = self.empty_batch(prefixes.len());
        for (b, prefix) in prefixes.iter().enumerate() {
            if prefix.is_empty() {
                return Err(Error::SessionTooShort { user: "<prefix>".into() });
            }
            let inputs = tail(prefix, self.n);
            let pad = self.n - inputs.len();
            for (i, event) in inputs.iter().enumerate() {
                self.fill_slot(&mut batch, b * self.n + pad + i, event);
            }
            self.close_rows(&mut batch, b);
        }
        Ok(batch)
    }

    fn empty_batch(&self, b: usize) -> EncodedBatch {
        let slots = b * self.n;
        let dense_dim = self.dense_dim();
        let mut positions = Vec::with_capacity(slots);
        for _ in 0..b {
            positions.extend(0..self.n as u32);
        }
        EncodedBatch {
            batch: b,
            n: self.n,
            n_attrs: self.corpus.attribute_vocab.len(),
            dense_dim,
            token_ids: vec![0; slots],
            positions,
            attr_offsets: vec![0; 1],
            attr_indices: Vec::new(),
            dense_reps: vec![0.0; slots * dense_dim],
            target_ids: vec![0; slots],
            loss_mask: vec![false; slots],
        }
    }

    // Attribute CSR rows must be appended slot by slot; `fill_slot` stages
    // them keyed by slot and `close_rows` flushes one batch row in order.
    fn fill_slot(&self, batch: &mut EncodedBatch, slot: usize, event: &Interaction) {
        batch.token_ids[slot] = self.token_of(event);
        if self.carries_attrs(event) {
            batch.staged_attrs(slot, &event.attrs);
        }
        if self.carries_dense(event) {
            let v = event.dense_vec.as_ref().unwrap();
            let d = batch.dense_dim;
            batch.dense_reps[slot * d..(slot + 1) * d].copy_from_slice(v);
        }
    }

    fn close_rows(&self, batch: &mut EncodedBatch, b: usize) {
        batch.flush_attrs((b + 1) * self.n);
    }
}

impl EncodedBatch {
    fn staged_attrs(&mut self, slot: usize, attrs: &[u32]) {
        self.flush_attrs(slot);
        self.attr_indices.extend_from_slice(attrs);
        self.attr_offsets.push(self.attr_indices.len() as u32);
    }

    /// Extends the CSR offsets with empty rows up to (exclusive) `slot`.
    fn flush_attrs(&mut self, slot: usize) {
        let last = self.attr_indices.len() as u32;
        while self.attr_offsets.len() <= slot {
            self.attr_offsets.push(last);
        }
    }
}

fn tail<T>(slice: &[T], n: usize) -> &[T] {
    &slice[slice.len().saturating_sub(n)..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::*;
    use crate::corpus::RawKind;
    use crate::seqmodel::build_vocab;

    fn pe_corpus() -> Corpus {
        corpus_of(vec![(
            "u",
            vec![
                ev("item", "v1", &[], 0),
                ev("page", "p1", &["A"], 1),
                ev("item", "v2", &[], 2),
            ],
        )])
    }

    #[test]
    fn pe_encoding_routes_attrs_to_the_placeholder_slot() {
        let c = pe_corpus();
        let strategy = ReprStrategy::pe(true, false);
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();

        let page_token = vocab.lookup(PAGE_TOKEN).unwrap();
        let v1 = vocab.lookup("v1").unwrap();
        let v2 = vocab.lookup("v2").unwrap();
        // left-padded: slots [PAD, PAD, v1, PAGE]
        assert_eq!(batch.token_ids, vec![0, 0, v1, page_token]);
        assert_eq!(batch.target_ids, vec![0, 0, page_token, v2]);
        assert_eq!(batch.loss_mask, vec![false, false, true, true]);
        // attrs attach only at the page slot
        assert!(batch.attrs_at(2).is_empty());
        assert_eq!(batch.multihot_at(3), vec![1.0]);
    }

    #[test]
    fn page_targets_are_masked_when_disabled() {
        let c = pe_corpus();
        let strategy = ReprStrategy::pe(true, false);
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, false).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        assert_eq!(batch.loss_mask, vec![false, false, false, true]);
    }

    #[test]
    fn cpid_encoding_keeps_attr_rows_zero() {
        let c = pe_corpus();
        let strategy = ReprStrategy::cpid();
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        let cpid = vocab.lookup("cpid:A").unwrap();
        assert_eq!(batch.token_ids[3], cpid);
        for slot in 0..batch.slots() {
            assert!(batch.attrs_at(slot).is_empty());
        }
        // item-final preprocessing means the last slot always trains
        assert!(batch.loss_mask[3]);
    }

    #[test]
    fn sessions_truncate_to_the_most_recent_events() {
        let c = corpus_of(vec![(
            "u",
            (0..6).map(|i| ev("item", &format!("v{i}"), &[], i as i64)).collect(),
        )]);
        let strategy = ReprStrategy::upid();
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 3, true).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        // last 4 events [v2..v5]: inputs v2,v3,v4 and targets v3,v4,v5
        let tok = |name: &str| vocab.lookup(name).unwrap();
        assert_eq!(batch.token_ids, vec![tok("v2"), tok("v3"), tok("v4")]);
        assert_eq!(batch.target_ids, vec![tok("v3"), tok("v4"), tok("v5")]);
    }

    #[test]
    fn short_sessions_are_rejected() {
        let c = corpus_of(vec![("solo", vec![ev("item", "v1", &[], 0)])]);
        let strategy = ReprStrategy::upid();
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
        let err = enc.encode_batch(&[&c.sessions[0]]).unwrap_err();
        assert!(matches!(err, Error::SessionTooShort { .. }));
    }

    #[test]
    fn dense_channel_is_filled_under_pe() {
        let mut b = crate::corpus::CorpusBuilder::new(Some(2));
        b.push_raw(crate::corpus::RawSession {
            user: "u".into(),
            events: vec![
                ev("item", "v1", &[], 0),
                crate::corpus::RawInteraction {
                    t: 1,
                    kind: RawKind::Page,
                    id: "q".into(),
                    attrs: Some(vec!["A".into()]),
                    vec: Some(vec![0.5, -1.0]),
                    list_items: None,
                },
                ev("item", "v2", &[], 2),
            ],
        })
        .unwrap();
        let c = b.finish();
        let strategy = ReprStrategy::pe(false, true);
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 3, true).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        assert_eq!(batch.dense_dim, 2);
        assert_eq!(batch.dense_at(2), Some(&[0.5, -1.0][..]));
        assert_eq!(batch.dense_at(1), None);
    }

    #[test]
    fn prefix_encoding_puts_last_event_on_final_slot() {
        let c = pe_corpus();
        let strategy = ReprStrategy::cpid();
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
        let prefix = &c.sessions[0].events[..2];
        let batch = enc.encode_prefixes(&[prefix]).unwrap();
        assert_eq!(batch.token_ids[3], vocab.lookup("cpid:A").unwrap());
        assert_eq!(batch.token_ids[2], vocab.lookup("v1").unwrap());
        assert!(!batch.loss_mask.iter().any(|&m| m));
    }
}
