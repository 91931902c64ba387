//! Causal multi-head self-attention encoder (pre-layer-norm blocks with a
//! GELU feed-forward), forward pass plus exact reverse-mode gradients.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::encode::EncodedBatch;
use super::params::{AttnLayerParams, LayerNormParams};

pub(super) const LN_EPS: f64 = 1e-12;

pub(super) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Vec<f64>,
}

/// y = gamma * (x - mean) / sqrt(var + eps) + beta, per row.
pub(super) fn layer_norm_forward(
    x: &Array2<f64>,
    ln: &LayerNormParams,
) -> (Array2<f64>, LnCache) {
    let (rows, d) = x.dim();
    let mut y = Array2::zeros((rows, d));
    let mut xhat = Array2::zeros((rows, d));
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = istd;
        for c in 0..d {
            let xh = (x[[r, c]] - mean) * istd;
            xhat[[r, c]] = xh;
            y[[r, c]] = ln.gamma[c] * xh + ln.beta[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Returns dx and accumulates dgamma/dbeta.
pub(super) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    ln: &LayerNormParams,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    let (rows, d) = dy.dim();
    let mut dx = Array2::zeros((rows, d));
    for r in 0..rows {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for c in 0..d {
            let dyv = dy[[r, c]];
            let xh = cache.xhat[[r, c]];
            dgamma[c] += dyv * xh;
            dbeta[c] += dyv;
            let dxhat = dyv * ln.gamma[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xh;
        }
        let inv_d = 1.0 / d as f64;
        for c in 0..d {
            let dxhat = dy[[r, c]] * ln.gamma[c];
            dx[[r, c]] = cache.inv_std[r]
                * (dxhat - sum_dxhat * inv_d - cache.xhat[[r, c]] * sum_dxhat_xhat * inv_d);
        }
    }
    dx
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub(super) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(super) fn gelu_prime(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Dropout factor mask: 0 with probability p, else 1/(1-p).
fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep })
}

struct LayerCache {
    ln1: LnCache,
    u: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax probabilities per (sample, head), pre-dropout.
    attn: Vec<Array2<f64>>,
    attn_mask: Option<Vec<Array2<f64>>>,
    concat: Array2<f64>,
    ln2: LnCache,
    w: Array2<f64>,
    z1: Array2<f64>,
    g: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

pub(super) struct AttnCache {
    layers: Vec<LayerCache>,
    final_ln: LnCache,
}

/// Key positions a query may attend to: causal, real (non-PAD) keys, and
/// always itself so no row is left without support.
fn allowed(batch: &EncodedBatch, b: usize, i: usize, j: usize) -> bool {
    j <= i && (batch.token_ids[b * batch.n + j] != 0 || j == i)
}

pub(super) fn attention_forward(
    layers: &[AttnLayerParams],
    final_ln: &LayerNormParams,
    heads: usize,
    dropout: f64,
    h0: Array2<f64>,
    batch: &EncodedBatch,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, AttnCache) {
    let (rows, d) = h0.dim();
    let n = batch.n;
    let b_count = batch.batch;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut x = h0;
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (u, ln1) = layer_norm_forward(&x, &layer.ln1);
        let q = u.dot(&layer.w_q) + &layer.b_q;
        let k = u.dot(&layer.w_k) + &layer.b_k;
        let v = u.dot(&layer.w_v) + &layer.b_v;

        let mut concat = Array2::zeros((rows, d));
        let mut attn = Vec::with_capacity(b_count * heads);
        let mut attn_mask = rng.is_some().then(Vec::new);
        for b in 0..b_count {
            let row0 = b * n;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![row0..row0 + n, cols.clone()]);
                let kh = k.slice(s![row0..row0 + n, cols.clone()]);
                let vh = v.slice(s![row0..row0 + n, cols.clone()]);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                // row softmax over the allowed keys
                let mut probs = Array2::zeros((n, n));
                for i in 0..n {
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        if allowed(batch, b, i, j) {
                            max = max.max(scores[[i, j]]);
                        }
                    }
                    let mut denom = 0.0;
                    for j in 0..=i {
                        if allowed(batch, b, i, j) {
                            let e = (scores[[i, j]] - max).exp();
                            probs[[i, j]] = e;
                            denom += e;
                        }
                    }
                    for j in 0..=i {
                        probs[[i, j]] /= denom;
                    }
                }
                let effective = match (&mut rng, &mut attn_mask) {
                    (Some(rng), Some(masks)) => {
                        let mask = dropout_mask(rng, (n, n), dropout);
                        let eff = &probs * &mask;
                        masks.push(mask);
                        eff
                    }
                    _ => probs.clone(),
                };
                let oh = effective.dot(&vh);
                concat.slice_mut(s![row0..row0 + n, cols]).assign(&oh);
                attn.push(probs);
            }
        }
        let x2 = &x + &(concat.dot(&layer.w_o) + &layer.b_o);

        let (w, ln2) = layer_norm_forward(&x2, &layer.ln2);
        let z1 = w.dot(&layer.w_ff1) + &layer.b_ff1;
        let g = z1.mapv(gelu);
        let z2 = g.dot(&layer.w_ff2) + &layer.b_ff2;
        let (ffn_out, ffn_mask) = match &mut rng {
            Some(rng) => {
                let mask = dropout_mask(rng, z2.dim(), dropout);
                (&z2 * &mask, Some(mask))
            }
            None => (z2, None),
        };
        let y = &x2 + &ffn_out;

        caches.push(LayerCache {
            ln1,
            u,
            q,
            k,
            v,
            attn,
            attn_mask,
            concat,
            ln2,
            w,
            z1,
            g,
            ffn_mask,
        });
        x = y;
    }

    let (out, final_cache) = layer_norm_forward(&x, final_ln);
    (out, AttnCache { layers: caches, final_ln: final_cache })
}

/// Backpropagates `dout` through the encoder; layer gradients are written
/// into `grads` (same structure as the parameters) and the gradient w.r.t.
/// the embedded input is returned.
#[allow(clippy::too_many_arguments)]
pub(super) fn attention_backward(
    layers: &[AttnLayerParams],
    final_ln: &LayerNormParams,
    heads: usize,
    cache: &AttnCache,
    batch: &EncodedBatch,
    dout: Array2<f64>,
    grad_layers: &mut [AttnLayerParams],
    grad_final_ln: &mut LayerNormParams,
) -> Array2<f64> {
    let d = dout.dim().1;
    let n = batch.n;
    let b_count = batch.batch;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dx = layer_norm_backward(
        &dout,
        &cache.final_ln,
        final_ln,
        &mut grad_final_ln.gamma,
        &mut grad_final_ln.beta,
    );

    for (li, layer) in layers.iter().enumerate().rev() {
        let lc = &cache.layers[li];
        let gl = &mut grad_layers[li];
        let dy = dx;

        // FFN branch: y = x2 + dropout(gelu(w.W1 + b1).W2 + b2)
        let dz2 = match &lc.ffn_mask {
            Some(mask) => &dy * mask,
            None => dy.clone(),
        };
        gl.b_ff2 += &dz2.sum_axis(ndarray::Axis(0));
        gl.w_ff2 += &lc.g.t().dot(&dz2);
        let dg = dz2.dot(&layer.w_ff2.t());
        let dz1 = &dg * &lc.z1.mapv(gelu_prime);
        gl.b_ff1 += &dz1.sum_axis(ndarray::Axis(0));
        gl.w_ff1 += &lc.w.t().dot(&dz1);
        let dw = dz1.dot(&layer.w_ff1.t());
        let mut dx2 =
            layer_norm_backward(&dw, &lc.ln2, &layer.ln2, &mut gl.ln2.gamma, &mut gl.ln2.beta);
        dx2 += &dy; // residual

        // attention branch: x2 = x + concat.Wo + bo
        gl.b_o += &dx2.sum_axis(ndarray::Axis(0));
        gl.w_o += &lc.concat.t().dot(&dx2);
        let dconcat = dx2.dot(&layer.w_o.t());

        let rows = b_count * n;
        let mut dq = Array2::zeros((rows, d));
        let mut dk = Array2::zeros((rows, d));
        let mut dv = Array2::zeros((rows, d));
        for b in 0..b_count {
            let row0 = b * n;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let probs = &lc.attn[b * heads + h];
                let doh = dconcat.slice(s![row0..row0 + n, cols.clone()]);
                let qh = lc.q.slice(s![row0..row0 + n, cols.clone()]);
                let kh = lc.k.slice(s![row0..row0 + n, cols.clone()]);
                let vh = lc.v.slice(s![row0..row0 + n, cols.clone()]);

                let effective = match &lc.attn_mask {
                    Some(masks) => probs * &masks[b * heads + h],
                    None => probs.clone(),
                };
                let mut da = doh.dot(&vh.t());
                dv.slice_mut(s![row0..row0 + n, cols.clone()])
                    .assign(&effective.t().dot(&doh));
                if let Some(masks) = &lc.attn_mask {
                    da *= &masks[b * heads + h];
                }
                // softmax backward per row
                let mut ds = Array2::zeros((n, n));
                for i in 0..n {
                    let mut dot = 0.0;
                    for j in 0..=i {
                        dot += da[[i, j]] * probs[[i, j]];
                    }
                    for j in 0..=i {
                        ds[[i, j]] = probs[[i, j]] * (da[[i, j]] - dot);
                    }
                }
                ds *= scale;
                dq.slice_mut(s![row0..row0 + n, cols.clone()]).assign(&ds.dot(&kh));
                dk.slice_mut(s![row0..row0 + n, cols]).assign(&ds.t().dot(&qh));
            }
        }

        gl.b_q += &dq.sum_axis(ndarray::Axis(0));
        gl.w_q += &lc.u.t().dot(&dq);
        gl.b_k += &dk.sum_axis(ndarray::Axis(0));
        gl.w_k += &lc.u.t().dot(&dk);
        gl.b_v += &dv.sum_axis(ndarray::Axis(0));
        gl.w_v += &lc.u.t().dot(&dv);
        let du = dq.dot(&layer.w_q.t()) + dk.dot(&layer.w_k.t()) + dv.dot(&layer.w_v.t());
        let dx_ln =
            layer_norm_backward(&du, &lc.ln1, &layer.ln1, &mut gl.ln1.gamma, &mut gl.ln1.beta);
        dx = dx_ln + dx2; // residual into the layer input
    }
    dx
}
