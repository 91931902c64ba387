//! Ranking evaluation: hit rate and NDCG at k with non-item filtering, plus
//! the attribute-conditioned popularity baseline.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{Corpus, Interaction, Session};
use crate::error::{Error, Result};
use crate::seqmodel::{forward, Encoder, ModelParams, ReprStrategy, Vocab};

/// Which positions of an evaluation session become prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalProtocol {
    /// One target per session: the final item, scored from the full prefix.
    LastItem,
    /// Every position whose ground-truth successor is an item.
    AllItemTargets,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_targets: usize,
}

impl EvalReport {
    fn idx(&self, k: usize) -> usize {
        self.ks.iter().position(|&x| x == k).expect("k not in report")
    }

    pub fn hr(&self, k: usize) -> f64 {
        self.hr[self.idx(k)]
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        self.ndcg[self.idx(k)]
    }

    /// One-row CSV in the fixed `model,strategy,hr1,hr5,hr10,ndcg5,ndcg10,
    /// n_targets` layout; requires ks {1, 5, 10}.
    pub fn csv_row(&self, model: &str, strategy: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            model,
            strategy,
            self.hr(1),
            self.hr(5),
            self.hr(10),
            self.ndcg(5),
            self.ndcg(10),
            self.n_targets
        )
    }

    pub fn csv_header() -> &'static str {
        "model,strategy,hr1,hr5,hr10,ndcg5,ndcg10,n_targets"
    }
}

/// HR@k and NDCG@k for a single target at 1-based `rank` (`None` = miss):
/// a hit within k scores `1` and `1/log2(1+rank)` respectively.
pub fn compute_metrics(rank: Option<usize>, ks: &[usize]) -> Vec<(usize, f64, f64)> {
    ks.iter()
        .map(|&k| match rank {
            Some(r) if r <= k => (k, 1.0, 1.0 / ((r + 1) as f64).log2()),
            _ => (k, 0.0, 0.0),
        })
        .collect()
}

/// 1-based rank of `target` among the candidate tokens of `scores`
/// (`vocab`-indexed). Candidates are item tokens, plus page tokens when
/// `filter_non_items` is false; `[PAD]` never competes. Ties break by
/// ascending token id. `None` when the target itself is not a candidate.
pub fn rank_among(
    scores: &[f64],
    vocab: &Vocab,
    target: u32,
    filter_non_items: bool,
) -> Option<usize> {
    let candidate =
        |t: u32| t != 0 && (vocab.is_item(t) || !filter_non_items);
    if !candidate(target) {
        return None;
    }
    let ts = scores[target as usize];
    let mut rank = 1usize;
    for t in 1..vocab.len() as u32 {
        if t == target || !candidate(t) {
            continue;
        }
        let s = scores[t as usize];
        if s > ts || (s == ts && t < target) {
            rank += 1;
        }
    }
    Some(rank)
}

/// Extracts `(prefix, target interaction)` pairs per protocol. Sessions must
/// end with an item under `LastItem`.
fn targets_of<'a>(
    corpus: &Corpus,
    session: &'a Session,
    protocol: EvalProtocol,
) -> Result<Vec<(&'a [Interaction], &'a Interaction)>> {
    let events = &session.events;
    match protocol {
        EvalProtocol::LastItem => {
            let last = events.last().ok_or(Error::EmptyCorpus("empty session"))?;
            if !last.is_item() {
                return Err(Error::NoItemTarget { user: session.user_id.clone() });
            }
            let _ = corpus;
            Ok(vec![(&events[..events.len() - 1], last)])
        }
        EvalProtocol::AllItemTargets => Ok((0..events.len() - 1)
            .filter(|&t| events[t + 1].is_item())
            .map(|t| (&events[..=t], &events[t + 1]))
            .collect()),
    }
}

/// Scores every evaluation target with the model and averages HR/NDCG over
/// them. Non-item tokens are always filtered from the candidate ranking; a
/// target without a vocabulary token counts as a miss.
pub fn evaluate_model(
    params: &ModelParams,
    corpus_eval: &Corpus,
    vocab: &Vocab,
    strategy: ReprStrategy,
    ks: &[usize],
    protocol: EvalProtocol,
) -> Result<EvalReport> {
    let encoder = Encoder::new(corpus_eval, vocab, strategy, params.dims.n, true)?;
    let mut prefixes: Vec<&[Interaction]> = Vec::new();
    let mut target_tokens: Vec<Option<u32>> = Vec::new();
    for session in &corpus_eval.sessions {
        for (prefix, target) in targets_of(corpus_eval, session, protocol)? {
            if prefix.is_empty() {
                continue;
            }
            prefixes.push(prefix);
            let token = vocab
                .lookup(corpus_eval.entity_name(target.entity))
                .filter(|&t| vocab.is_item(t));
            target_tokens.push(token);
        }
    }

    let mut acc = MetricAccumulator::new(ks);
    const CHUNK: usize = 64;
    for (chunk, tokens) in prefixes.chunks(CHUNK).zip(target_tokens.chunks(CHUNK)) {
        let batch = encoder.encode_prefixes(chunk)?;
        let logits = forward(params, &batch, None)?;
        for (i, token) in tokens.iter().enumerate() {
            let last_slot = (i + 1) * batch.n - 1;
            let scores = logits.row(last_slot);
            let rank = token
                .and_then(|t| rank_among(scores.as_slice().unwrap(), vocab, t, true));
            acc.push(rank);
        }
    }
    Ok(acc.finish())
}

struct MetricAccumulator {
    ks: Vec<usize>,
    hr_sum: Vec<f64>,
    ndcg_sum: Vec<f64>,
    n: usize,
}

impl MetricAccumulator {
    fn new(ks: &[usize]) -> Self {
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        Self { hr_sum: vec![0.0; ks.len()], ndcg_sum: vec![0.0; ks.len()], ks, n: 0 }
    }

    fn push(&mut self, rank: Option<usize>) {
        for (i, (_, hr, ndcg)) in compute_metrics(rank, &self.ks).into_iter().enumerate() {
            self.hr_sum[i] += hr;
            self.ndcg_sum[i] += ndcg;
        }
        self.n += 1;
    }

    fn finish(self) -> EvalReport {
        let denom = self.n.max(1) as f64;
        EvalReport {
            ks: self.ks,
            hr: self.hr_sum.iter().map(|x| x / denom).collect(),
            ndcg: self.ndcg_sum.iter().map(|x| x / denom).collect(),
            n_targets: self.n,
        }
    }
}

/// Popularity ranking conditioned on the exact attribute combination:
/// items whose attribute set equals the query combination, ordered by train
/// interaction count (ties by ascending item id). Unknown combinations fall
/// back to global popularity.
pub struct GenrePopBaseline {
    by_combo: HashMap<Box<[u32]>, Vec<String>>,
    global: Vec<String>,
}

pub fn genre_pop_baseline(corpus_train: &Corpus) -> GenrePopBaseline {
    let mut count: HashMap<u32, u64> = HashMap::new();
    let mut combo_of: HashMap<u32, Box<[u32]>> = HashMap::new();
    for s in &corpus_train.sessions {
        for e in &s.events {
            if e.is_item() {
                *count.entry(e.entity).or_default() += 1;
                combo_of.entry(e.entity).or_insert_with(|| e.attrs.clone());
            }
        }
    }
    let ranked = |mut items: Vec<(u64, &str)>| -> Vec<String> {
        items.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        items.into_iter().map(|(_, name)| name.to_string()).collect()
    };
    let mut groups: HashMap<Box<[u32]>, Vec<(u64, &str)>> = HashMap::new();
    let mut all: Vec<(u64, &str)> = Vec::new();
    for (&entity, combo) in &combo_of {
        let c = count[&entity];
        let name = corpus_train.entity_name(entity);
        groups.entry(combo.clone()).or_default().push((c, name));
        all.push((c, name));
    }
    GenrePopBaseline {
        by_combo: groups.into_iter().map(|(k, v)| (k, ranked(v))).collect(),
        global: ranked(all),
    }
}

impl GenrePopBaseline {
    /// Top-k item ids for an attribute combination.
    pub fn query(&self, attrs: &[u32], k: usize) -> Vec<&str> {
        self.ranking(attrs).iter().take(k).map(String::as_str).collect()
    }

    fn ranking(&self, attrs: &[u32]) -> &[String] {
        let mut key: Vec<u32> = attrs.to_vec();
        key.sort_unstable();
        match self.by_combo.get(key.as_slice()) {
            Some(list) => list,
            None => &self.global,
        }
    }

    /// Scores each evaluation target against the ranking for its own true
    /// attribute combination.
    pub fn evaluate(
        &self,
        corpus_eval: &Corpus,
        ks: &[usize],
        protocol: EvalProtocol,
    ) -> Result<EvalReport> {
        let mut acc = MetricAccumulator::new(ks);
        for session in &corpus_eval.sessions {
            for (_, target) in targets_of(corpus_eval, session, protocol)? {
                let name = corpus_eval.entity_name(target.entity);
                let rank = self
                    .ranking(&target.attrs)
                    .iter()
                    .position(|x| x == name)
                    .map(|p| p + 1);
                acc.push(rank);
            }
        }
        Ok(acc.finish())
    }
}
