//! The fusion embedding layer and the full forward/backward pass.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::attention::{attention_backward, attention_forward, AttnCache};
use super::encode::EncodedBatch;
use super::gru::{gru_backward, gru_forward, GruCache};
use super::params::{BackendConfig, EncoderParams, ModelParams};

/// Per-position input embedding: the sum of the id embedding, the positional
/// embedding (self-attention backend only), the projected attribute
/// multi-hot and the projected dense representation. The attribute and dense
/// terms (including their biases) contribute only at positions that carry
/// attributes / a nonzero dense row.
pub fn embed_input(params: &ModelParams, batch: &EncodedBatch) -> Array2<f64> {
    let d = params.dims.d;
    let use_positions = matches!(params.backend, BackendConfig::SelfAttention { .. });
    let mut h0 = Array2::zeros((batch.slots(), d));
    for slot in 0..batch.slots() {
        let mut row = h0.row_mut(slot);
        row += &params.e_v.row(batch.token_ids[slot] as usize);
        if use_positions {
            row += &params.e_g.row(batch.positions[slot] as usize);
        }
        let attrs = batch.attrs_at(slot);
        if !attrs.is_empty() {
            for &a in attrs {
                row += &params.w_a.row(a as usize);
            }
            row += &params.b_a;
        }
        if let Some(dense) = batch.dense_at(slot) {
            for (i, &x) in dense.iter().enumerate() {
                if x != 0.0 {
                    row.scaled_add(x, &params.w_r.row(i));
                }
            }
            row += &params.b_r;
        }
    }
    h0
}

fn embed_backward(
    params: &ModelParams,
    batch: &EncodedBatch,
    dh0: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let use_positions = matches!(params.backend, BackendConfig::SelfAttention { .. });
    for slot in 0..batch.slots() {
        let g = dh0.row(slot);
        let mut ev_row = grads.e_v.row_mut(batch.token_ids[slot] as usize);
        ev_row += &g;
        if use_positions {
            let mut eg_row = grads.e_g.row_mut(batch.positions[slot] as usize);
            eg_row += &g;
        }
        let attrs = batch.attrs_at(slot);
        if !attrs.is_empty() {
            for &a in attrs {
                let mut wa_row = grads.w_a.row_mut(a as usize);
                wa_row += &g;
            }
            grads.b_a += &g;
        }
        if let Some(dense) = batch.dense_at(slot) {
            for (i, &x) in dense.iter().enumerate() {
                if x != 0.0 {
                    grads.w_r.row_mut(i).scaled_add(x, &g);
                }
            }
            grads.b_r += &g;
        }
    }
}

enum EncoderCache {
    Attn(AttnCache),
    Gru(GruCache),
}

fn forward_cached(
    params: &ModelParams,
    batch: &EncodedBatch,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, Array2<f64>, EncoderCache)> {
    let h0 = embed_input(params, batch);
    let (hidden, cache) = match (&params.encoder, params.backend) {
        (
            EncoderParams::SelfAttention { layers, final_ln },
            BackendConfig::SelfAttention { heads, dropout, .. },
        ) => {
            let rng = if dropout > 0.0 { dropout_rng } else { None };
            let (hidden, cache) =
                attention_forward(layers, final_ln, heads, dropout, h0, batch, rng);
            (hidden, EncoderCache::Attn(cache))
        }
        (EncoderParams::Gru { layers }, BackendConfig::Gru { .. }) => {
            let (hidden, cache) = gru_forward(layers, h0, batch.batch, batch.n);
            (hidden, EncoderCache::Gru(cache))
        }
        _ => unreachable!("encoder parameters always match the backend config"),
    };
    // scores against every vocabulary token, weights tied to the id embedding
    let logits = hidden.dot(&params.e_v.t());
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite { where_: "logits", detail: format!("{bad}") });
    }
    Ok((logits, hidden, cache))
}

/// Scores for every slot and vocabulary token, laid out `(batch * n, vocab)`.
/// Pass a dropout RNG to sample new dropout masks (training mode); `None`
/// runs deterministically.
pub fn forward(
    params: &ModelParams,
    batch: &EncodedBatch,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Array2<f64>> {
    forward_cached(params, batch, dropout_rng).map(|(logits, _, _)| logits)
}

fn masked_cross_entropy(
    logits: &Array2<f64>,
    batch: &EncodedBatch,
) -> Result<(f64, Array2<f64>)> {
    let n_masked = batch.n_masked();
    if n_masked == 0 {
        return Err(Error::AllMasked);
    }
    let inv_m = 1.0 / n_masked as f64;
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros(logits.dim());
    for slot in 0..batch.slots() {
        if !batch.loss_mask[slot] {
            continue;
        }
        let row = logits.row(slot);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let target = batch.target_ids[slot] as usize;
        loss += (lse - row[target]) * inv_m;
        let mut drow = dlogits.row_mut(slot);
        for (c, &x) in row.iter().enumerate() {
            drow[c] = (x - lse).exp() * inv_m;
        }
        drow[target] -= inv_m;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { where_: "loss", detail: format!("{loss}") });
    }
    Ok((loss, dlogits))
}

/// Deterministic (dropout-free) loss; used by gradient checks.
pub fn loss(params: &ModelParams, batch: &EncodedBatch) -> Result<f64> {
    let (logits, _, _) = forward_cached(params, batch, None)?;
    masked_cross_entropy(&logits, batch).map(|(l, _)| l)
}

/// Mean cross-entropy over unmasked targets plus exact gradients for every
/// parameter, computed by reverse-mode differentiation of the whole model.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &EncodedBatch,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams)> {
    let (logits, hidden, cache) = forward_cached(params, batch, dropout_rng)?;
    let (loss, dlogits) = masked_cross_entropy(&logits, batch)?;

    let mut grads = params.zeros_like();
    // tied output head: logits = hidden . e_v^T
    let dhidden = dlogits.dot(&params.e_v);
    grads.e_v += &dlogits.t().dot(&hidden);

    let dh0 = match (&params.encoder, &mut grads.encoder, cache) {
        (
            EncoderParams::SelfAttention { layers, final_ln },
            EncoderParams::SelfAttention { layers: glayers, final_ln: gfinal },
            EncoderCache::Attn(cache),
        ) => {
            let heads = match params.backend {
                BackendConfig::SelfAttention { heads, .. } => heads,
                _ => unreachable!(),
            };
            attention_backward(
                layers, final_ln, heads, &cache, batch, dhidden, glayers, gfinal,
            )
        }
        (
            EncoderParams::Gru { layers },
            EncoderParams::Gru { layers: glayers },
            EncoderCache::Gru(cache),
        ) => gru_backward(layers, &cache, dhidden, glayers),
        _ => unreachable!(),
    };
    embed_backward(params, batch, &dh0, &mut grads);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::super::{build_vocab, Encoder, ModelDims, ReprStrategy, TrainConfig};
    use super::*;
    use crate::corpus::testutil::*;
    use crate::corpus::Corpus;

    fn chain_corpus(n_items: usize) -> Corpus {
        let events = (0..n_items)
            .map(|i| ev("item", &format!("v{i}"), &[], i as i64))
            .collect();
        corpus_of(vec![("u", events)])
    }

    fn tiny_setup(
        backend: BackendConfig,
        n: usize,
        corpus: &Corpus,
        strategy: ReprStrategy,
    ) -> (ModelParams, EncodedBatch) {
        let vocab = build_vocab(corpus, strategy).unwrap();
        let enc = Encoder::new(corpus, &vocab, strategy, n, true).unwrap();
        let sessions: Vec<_> = corpus.sessions.iter().collect();
        let batch = enc.encode_batch(&sessions).unwrap();
        let dims = ModelDims {
            d: 8,
            n,
            vocab: vocab.len(),
            n_attrs: corpus.attribute_vocab.len(),
            dense_dim: corpus.dense_dim.unwrap_or(0),
        };
        (ModelParams::init(dims, backend, 5), batch)
    }

    fn tiny_attention() -> BackendConfig {
        BackendConfig::SelfAttention { layers: 2, heads: 2, inner: 16, dropout: 0.0 }
    }

    #[test]
    fn zero_weights_give_uniform_cross_entropy() {
        let c = chain_corpus(6);
        for backend in [tiny_attention(), BackendConfig::gru()] {
            let (params, batch) = tiny_setup(backend, 5, &c, ReprStrategy::upid());
            let zero = params.zeros_like();
            let l = loss(&zero, &batch).unwrap();
            let expected = (zero.dims.vocab as f64).ln();
            assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
        }
    }

    #[test]
    fn logits_have_batch_by_slots_by_vocab_layout() {
        let c = chain_corpus(5);
        let (params, batch) = tiny_setup(tiny_attention(), 4, &c, ReprStrategy::upid());
        let logits = forward(&params, &batch, None).unwrap();
        assert_eq!(logits.dim(), (4, params.dims.vocab));
        assert_eq!(batch.batch, 1);
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        let c = chain_corpus(6);
        let (params, batch) = tiny_setup(tiny_attention(), 5, &c, ReprStrategy::upid());
        let logits = forward(&params, &batch, None).unwrap();
        // perturb the input at the final position
        let mut perturbed = batch.clone();
        let last = perturbed.slots() - 1;
        perturbed.token_ids[last] = 1;
        let logits2 = forward(&params, &perturbed, None).unwrap();
        for slot in 0..last {
            for v in 0..params.dims.vocab {
                assert_eq!(logits[[slot, v]], logits2[[slot, v]], "slot {slot} leaked");
            }
        }
        assert!((0..params.dims.vocab).any(|v| logits[[last, v]] != logits2[[last, v]]));
    }

    #[test]
    fn fusion_is_pure_id_plus_position_without_attrs() {
        let c = chain_corpus(4);
        let (params, batch) = tiny_setup(tiny_attention(), 4, &c, ReprStrategy::upid());
        let h0 = embed_input(&params, &batch);
        for slot in 0..batch.slots() {
            let expected = &params.e_v.row(batch.token_ids[slot] as usize)
                + &params.e_g.row(batch.positions[slot] as usize);
            for (a, b) in h0.row(slot).iter().zip(expected.iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn embed_hand_examples() {
        // d = 2 model with hand-set tables
        let c = corpus_of(vec![(
            "u",
            vec![
                ev("item", "v1", &[], 0),
                ev("page", "p", &["a0", "a1", "a2"], 1),
                ev("item", "v2", &[], 2),
            ],
        )]);
        let strategy = ReprStrategy::pe(true, false);
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 2, true).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        let dims = ModelDims { d: 2, n: 2, vocab: vocab.len(), n_attrs: 3, dense_dim: 0 };
        let mut params = ModelParams::init(
            dims,
            BackendConfig::SelfAttention { layers: 1, heads: 1, inner: 4, dropout: 0.0 },
            0,
        );
        params.visit_mut(&mut |_, d| d.fill(0.0));
        // e = (1,0) for the v1 token, g = (0,1) at slot 0
        let v1 = vocab.lookup("v1").unwrap() as usize;
        params.e_v[[v1, 0]] = 1.0;
        params.e_g[[0, 1]] = 1.0;
        // attr rows: w0 = (1,1), w2 = (2,0)
        params.w_a[[0, 0]] = 1.0;
        params.w_a[[0, 1]] = 1.0;
        params.w_a[[2, 0]] = 2.0;

        let h0 = embed_input(&params, &batch);
        // slot 0: item v1, no attrs -> e + g = (1,1)
        assert_eq!(h0[[0, 0]], 1.0);
        assert_eq!(h0[[0, 1]], 1.0);
        // slot 1: page with attrs {a0,a1,a2}; only rows 0 and 2 are nonzero:
        // (1,1)+(2,0) = (3,1); page token embedding is zero, g[1] is zero
        assert_eq!(h0[[1, 0]], 3.0);
        assert_eq!(h0[[1, 1]], 1.0);
    }

    #[test]
    fn duplicated_sessions_leave_loss_unchanged() {
        let c = chain_corpus(5);
        let strategy = ReprStrategy::upid();
        let vocab = build_vocab(&c, strategy).unwrap();
        let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
        let single = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        let double = enc.encode_batch(&[&c.sessions[0], &c.sessions[0]]).unwrap();
        let dims = ModelDims {
            d: 8,
            n: 4,
            vocab: vocab.len(),
            n_attrs: c.attribute_vocab.len(),
            dense_dim: 0,
        };
        for backend in [tiny_attention(), BackendConfig::gru()] {
            let params = ModelParams::init(dims, backend, 9);
            let l1 = loss(&params, &single).unwrap();
            let l2 = loss(&params, &double).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn all_masked_batch_is_an_error() {
        let c = corpus_of(vec![(
            "u",
            vec![ev("item", "v1", &[], 0), ev("page", "p", &["a"], 1)],
        )]);
        let strategy = ReprStrategy::cpid();
        let vocab = build_vocab(&c, strategy).unwrap();
        // page targets masked and the session's only target is the page
        let enc = Encoder::new(&c, &vocab, strategy, 3, false).unwrap();
        let batch = enc.encode_batch(&[&c.sessions[0]]).unwrap();
        let dims = ModelDims {
            d: 8,
            n: 3,
            vocab: vocab.len(),
            n_attrs: c.attribute_vocab.len(),
            dense_dim: 0,
        };
        let params = ModelParams::init(dims, tiny_attention(), 2);
        assert!(matches!(
            loss_and_grad(&params, &batch, None),
            Err(Error::AllMasked)
        ));
    }

    /// Adds `delta` to the idx-th scalar (flatten order).
    fn perturb(p: &mut ModelParams, idx: usize, delta: f64) {
        let mut offset = 0usize;
        p.visit_mut(&mut |_, data| {
            if idx >= offset && idx < offset + data.len() {
                data[idx - offset] += delta;
            }
            offset += data.len();
        });
    }

    /// Central finite differences against the analytic gradient. Near-zero
    /// coordinates (below 1e-3, where the h^2 truncation term of the
    /// differences dominates any relative measure) are held to an absolute
    /// bound instead.
    fn fd_max_rel_err(params: &ModelParams, batch: &EncodedBatch) -> f64 {
        let (_, grads) = loss_and_grad(params, batch, None).unwrap();
        let analytic = grads.flatten();
        let h = 1e-4;
        let mut p = params.clone();
        let mut worst = 0.0f64;
        for (i, &ga) in analytic.iter().enumerate() {
            perturb(&mut p, i, h);
            let lp = loss(&p, batch).unwrap();
            perturb(&mut p, i, -2.0 * h);
            let lm = loss(&p, batch).unwrap();
            perturb(&mut p, i, h);
            let gf = (lp - lm) / (2.0 * h);
            let denom = ga.abs().max(gf.abs());
            let abs = (ga - gf).abs();
            let err = if denom < 1e-3 {
                assert!(abs < 1e-7, "near-zero gradient {i}: analytic {ga}, fd {gf}");
                0.0
            } else {
                abs / denom
            };
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::corpus::{CorpusBuilder, RawInteraction, RawKind, RawSession};
        // sessions mixing items, attribute pages and a dense-vector page
        let mut builder = CorpusBuilder::new(Some(3));
        for u in 0..3 {
            let mut events = vec![
                ev("item", &format!("v{u}"), &[], 0),
                ev("page", "p1", &["a", "b"], 1),
                ev("item", &format!("v{}", u + 1), &[], 2),
            ];
            events.push(RawInteraction {
                t: 3,
                kind: RawKind::Page,
                id: "q".into(),
                attrs: Some(vec!["c".into()]),
                vec: Some(vec![0.3 * u as f64 + 0.1, -0.7, 0.4]),
                list_items: None,
            });
            events.push(ev("item", "v0", &[], 4));
            builder
                .push_raw(RawSession { user: format!("u{u}"), events })
                .unwrap();
        }
        let c = builder.finish();
        for backend in [
            BackendConfig::SelfAttention { layers: 2, heads: 2, inner: 8, dropout: 0.0 },
            BackendConfig::gru(),
        ] {
            for strategy in [ReprStrategy::pe(true, true), ReprStrategy::cpid()] {
                let vocab = build_vocab(&c, strategy).unwrap();
                let enc = Encoder::new(&c, &vocab, strategy, 4, true).unwrap();
                let sessions: Vec<_> = c.sessions.iter().collect();
                let batch = enc.encode_batch(&sessions).unwrap();
                let dims = ModelDims {
                    d: 8,
                    n: 4,
                    vocab: vocab.len(),
                    n_attrs: c.attribute_vocab.len(),
                    dense_dim: 3,
                };
                let params = ModelParams::init(dims, backend, 17);
                let worst = fd_max_rel_err(&params, &batch);
                assert!(worst < 1e-4, "{backend:?}/{strategy:?}: max rel err {worst}");
            }
        }
    }

    #[test]
    fn default_config_matches_documented_scale() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.d, 64);
        assert_eq!(cfg.batch_size, 64);
        match cfg.backend {
            BackendConfig::SelfAttention { layers, heads, inner, dropout } => {
                assert_eq!((layers, heads, inner), (2, 2, 256));
                assert!((dropout - 0.2).abs() < 1e-12);
            }
            _ => panic!("default backend should be self-attention"),
        }
    }
}
