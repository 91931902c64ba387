//! Top-k next-item prediction from a session prefix.

use crate::corpus::{Corpus, Interaction};
use crate::error::{Error, Result};

use super::encode::Encoder;
use super::model::forward;
use super::params::ModelParams;
use super::{ReprStrategy, Vocab};

/// Scores the prefix, removes non-item tokens (and `[PAD]`) when
/// `filter_non_items` is set, breaks score ties by ascending token id and
/// returns the top-k token texts (item ids under filtering).
pub fn predict_topk(
    params: &ModelParams,
    corpus: &Corpus,
    prefix: &[Interaction],
    vocab: &Vocab,
    strategy: ReprStrategy,
    k: usize,
    filter_non_items: bool,
) -> Result<Vec<String>> {
    if k < 1 {
        return Err(Error::ZeroK);
    }
    let encoder = Encoder::new(corpus, vocab, strategy, params.dims.n, true)?;
    let batch = encoder.encode_prefixes(&[prefix])?;
    let logits = forward(params, &batch, None)?;
    let last = batch.slots() - 1;
    let scores = logits.row(last);

    let mut candidates: Vec<u32> = (1..vocab.len() as u32)
        .filter(|&t| vocab.is_item(t) || !filter_non_items)
        .collect();
    candidates.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(candidates
        .into_iter()
        .take(k)
        .map(|t| vocab.token(t).to_string())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::{build_vocab, BackendConfig, ModelDims};
    use super::*;
    use crate::corpus::testutil::*;

    /// a model whose last-position scores are raised for chosen tokens by
    /// planting values in the tied output embedding
    fn rigged(corpus: &Corpus, vocab: &Vocab, scores: &[(&str, f64)]) -> ModelParams {
        let dims = ModelDims {
            d: 2,
            n: 4,
            vocab: vocab.len(),
            n_attrs: corpus.attribute_vocab.len(),
            dense_dim: 0,
        };
        let mut params = ModelParams::init(
            dims,
            BackendConfig::SelfAttention { layers: 1, heads: 1, inner: 2, dropout: 0.0 },
            0,
        );
        params.visit_mut(&mut |name, data| {
            if name == "final_ln.gamma" {
                // keep the final layer norm as identity-ish: gamma stays
                data.fill(1.0);
            } else if !name.contains("ln") {
                data.fill(0.0);
            }
        });
        // final hidden state is the normalized constant row; give each token
        // an e_v row proportional to its desired score along dimension 0.
        // With beta = (1, 0) the hidden row is exactly (1, 0).
        params.visit_mut(&mut |name, data| {
            if name == "final_ln.beta" {
                data[0] = 1.0;
            }
        });
        for (token, s) in scores {
            let id = vocab.lookup(token).unwrap() as usize;
            params.e_v[[id, 0]] = *s;
        }
        params
    }

    fn scored_corpus() -> Corpus {
        corpus_of(vec![(
            "u",
            vec![
                ev("item", "v1", &[], 0),
                ev("item", "v2", &[], 1),
                ev("page", "p1", &["a"], 2),
                ev("item", "v1", &[], 3),
            ],
        )])
    }

    #[test]
    fn pages_are_filtered_from_the_ranking() {
        let c = scored_corpus();
        let vocab = build_vocab(&c, ReprStrategy::upid()).unwrap();
        let params = rigged(&c, &vocab, &[("v1", 0.9), ("p1", 0.95), ("v2", 0.5)]);
        let prefix = &c.sessions[0].events[..2];
        let top =
            predict_topk(&params, &c, prefix, &vocab, ReprStrategy::upid(), 2, true).unwrap();
        assert_eq!(top, vec!["v1", "v2"]);
        let unfiltered =
            predict_topk(&params, &c, prefix, &vocab, ReprStrategy::upid(), 2, false).unwrap();
        assert_eq!(unfiltered, vec!["p1", "v1"]);
    }

    #[test]
    fn k_larger_than_item_count_returns_all_items_ranked() {
        let c = scored_corpus();
        let vocab = build_vocab(&c, ReprStrategy::upid()).unwrap();
        let params = rigged(&c, &vocab, &[("v1", 0.2), ("v2", 0.7)]);
        let prefix = &c.sessions[0].events[..2];
        let top =
            predict_topk(&params, &c, prefix, &vocab, ReprStrategy::upid(), 99, true).unwrap();
        assert_eq!(top, vec!["v2", "v1"]);
    }

    #[test]
    fn ties_break_by_ascending_token_id() {
        let c = scored_corpus();
        let vocab = build_vocab(&c, ReprStrategy::upid()).unwrap();
        let params = rigged(&c, &vocab, &[]);
        let prefix = &c.sessions[0].events[..2];
        let top =
            predict_topk(&params, &c, prefix, &vocab, ReprStrategy::upid(), 2, true).unwrap();
        // all scores equal: vocabulary order decides
        assert_eq!(top, vec!["v1", "v2"]);
    }

    #[test]
    fn zero_k_is_rejected() {
        let c = scored_corpus();
        let vocab = build_vocab(&c, ReprStrategy::upid()).unwrap();
        let params = rigged(&c, &vocab, &[]);
        let err = predict_topk(
            &params,
            &c,
            &c.sessions[0].events[..2],
            &vocab,
            ReprStrategy::upid(),
            0,
            true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroK));
    }
}
