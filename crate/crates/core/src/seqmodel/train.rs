//! Adam training loop with per-epoch validation and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Session};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate_model, EvalProtocol};

use super::encode::Encoder;
use super::model::loss_and_grad;
use super::params::{ModelDims, ModelParams, TrainConfig};
use super::{ReprStrategy, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_hr10: f64,
    pub valid_ndcg10: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.t += 1;
        let g = grads.flatten();
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let mut offset = 0usize;
        let (m, v, lr) = (&mut self.m, &mut self.v, self.lr);
        params.visit_mut(&mut |_, data| {
            for (i, p) in data.iter_mut().enumerate() {
                let gi = g[offset + i];
                let mi = &mut m[offset + i];
                let vi = &mut v[offset + i];
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            offset += data.len();
        });
    }
}

/// Trains a model of `cfg.backend` on `corpus_train`, validating after each
/// epoch on `corpus_valid` (HR@10 / NDCG@10, session-final targets) and
/// early-stopping on validation NDCG@10. Returns the best-validation
/// parameters and the per-epoch log. With an empty validation corpus the
/// loop runs all epochs and returns the final parameters.
pub fn train(
    corpus_train: &Corpus,
    corpus_valid: &Corpus,
    vocab: &Vocab,
    strategy: ReprStrategy,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    strategy.validate()?;
    let dims = ModelDims {
        d: cfg.d,
        n: cfg.max_len,
        vocab: vocab.len(),
        n_attrs: corpus_train.attribute_vocab.len(),
        dense_dim: corpus_train.dense_dim.unwrap_or(0),
    };
    let mut params = ModelParams::init(dims, cfg.backend, cfg.seed);
    let mut log = Vec::new();
    if cfg.epochs == 0 {
        return Ok((params, log));
    }

    let encoder = Encoder::new(
        corpus_train,
        vocab,
        strategy,
        cfg.max_len,
        cfg.train_on_non_item_targets,
    )?;
    let trainable: Vec<&Session> = corpus_train
        .sessions
        .iter()
        .filter(|s| s.events.len() >= 2)
        .collect();
    if trainable.is_empty() {
        return Err(Error::EmptyCorpus("no trainable sessions"));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(params.n_scalars(), cfg.lr);

    let mut best: Option<(f64, ModelParams)> = None;
    let mut patience_left = cfg.early_stopping_patience;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..trainable.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let sessions: Vec<&Session> = chunk.iter().map(|&i| trainable[i]).collect();
            let batch = encoder.encode_batch(&sessions)?;
            let (loss, grads) = loss_and_grad(&params, &batch, Some(&mut dropout_rng))
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch, batch: bi },
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            adam.step(&mut params, &grads);
            epoch_loss += loss;
            n_batches += 1;
        }

        let (valid_hr10, valid_ndcg10) = if corpus_valid.sessions.is_empty() {
            (0.0, 0.0)
        } else {
            let report = evaluate_model(
                &params,
                corpus_valid,
                vocab,
                strategy,
                &[10],
                EvalProtocol::LastItem,
            )?;
            (report.hr(10), report.ndcg(10))
        };
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            valid_hr10,
            valid_ndcg10,
        });

        if corpus_valid.sessions.is_empty() {
            continue;
        }
        let improved = best.as_ref().is_none_or(|(b, _)| valid_ndcg10 > *b);
        if improved {
            best = Some((valid_ndcg10, params.clone()));
            patience_left = cfg.early_stopping_patience;
        } else if patience_left == 0 {
            break;
        } else {
            patience_left -= 1;
        }
    }

    let final_params = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((final_params, log))
}
