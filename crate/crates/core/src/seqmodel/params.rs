//! Model parameters: fusion embedding tables plus per-backend encoder
//! weights, with a stable tensor enumeration used by the optimizer,
//! checkpointing and gradient checks.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    SelfAttention { layers: usize, heads: usize, inner: usize, dropout: f64 },
    Gru { layers: usize },
}

impl BackendConfig {
    /// Paper-scale self-attention defaults.
    pub fn self_attention() -> Self {
        BackendConfig::SelfAttention { layers: 2, heads: 2, inner: 256, dropout: 0.2 }
    }

    pub fn gru() -> Self {
        BackendConfig::Gru { layers: 2 }
    }

    pub fn dropout(&self) -> f64 {
        match self {
            BackendConfig::SelfAttention { dropout, .. } => *dropout,
            BackendConfig::Gru { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backend: BackendConfig,
    pub d: usize,
    /// Maximum input sequence length N.
    pub max_len: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Keep non-item successors in the training loss.
    pub train_on_non_item_targets: bool,
    pub early_stopping_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::self_attention(),
            d: 64,
            max_len: 200,
            lr: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 212,
            train_on_non_item_targets: true,
            early_stopping_patience: 10,
        }
    }
}

/// Tensor shapes fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub n: usize,
    pub vocab: usize,
    pub n_attrs: usize,
    pub dense_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    fn new(d: usize) -> Self {
        Self { gamma: Array1::ones(d), beta: Array1::zeros(d) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnLayerParams {
    pub ln1: LayerNormParams,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2: LayerNormParams,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_ir: Array2<f64>,
    pub w_hr: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_iz: Array2<f64>,
    pub w_hz: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub w_hn: Array2<f64>,
    pub b_hn: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    SelfAttention { layers: Vec<AttnLayerParams>, final_ln: LayerNormParams },
    Gru { layers: Vec<GruLayerParams> },
}

/// All trainable tensors. `e_v` doubles as the output projection (tied
/// weights, no bias).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub backend: BackendConfig,
    /// vocab x d id embedding.
    pub e_v: Array2<f64>,
    /// n x d positional embedding (used by the self-attention backend).
    pub e_g: Array2<f64>,
    /// n_attrs x d attribute projection, applied as `multihot^T . w_a + b_a`.
    pub w_a: Array2<f64>,
    pub b_a: Array1<f64>,
    /// dense_dim x d representation projection.
    pub w_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub encoder: EncoderParams,
}

impl ModelParams {
    /// Seeded initialization: weights and embeddings uniform in
    /// `[-1/sqrt(d), 1/sqrt(d)]`, biases zero, layer-norm gains one.
    pub fn init(dims: ModelDims, backend: BackendConfig, seed: u64) -> Self {
        if let BackendConfig::SelfAttention { heads, .. } = backend {
            assert!(dims.d % heads == 0, "d must be divisible by the head count");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dims.d as f64).sqrt();
        let mut mat = |r: usize, c: usize| -> Array2<f64> {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..=scale))
        };
        let d = dims.d;
        let e_v = mat(dims.vocab, d);
        let e_g = mat(dims.n, d);
        let w_a = mat(dims.n_attrs, d);
        let w_r = mat(dims.dense_dim, d);
        let encoder = match backend {
            BackendConfig::SelfAttention { layers, inner, .. } => EncoderParams::SelfAttention {
                layers: (0..layers)
                    .map(|_| AttnLayerParams {
                        ln1: LayerNormParams::new(d),
                        w_q: mat(d, d),
                        b_q: Array1::zeros(d),
                        w_k: mat(d, d),
                        b_k: Array1::zeros(d),
                        w_v: mat(d, d),
                        b_v: Array1::zeros(d),
                        w_o: mat(d, d),
                        b_o: Array1::zeros(d),
                        ln2: LayerNormParams::new(d),
                        w_ff1: mat(d, inner),
                        b_ff1: Array1::zeros(inner),
                        w_ff2: mat(inner, d),
                        b_ff2: Array1::zeros(d),
                    })
                    .collect(),
                final_ln: LayerNormParams::new(d),
            },
            BackendConfig::Gru { layers } => EncoderParams::Gru {
                layers: (0..layers)
                    .map(|_| GruLayerParams {
                        w_ir: mat(d, d),
                        w_hr: mat(d, d),
                        b_r: Array1::zeros(d),
                        w_iz: mat(d, d),
                        w_hz: mat(d, d),
                        b_z: Array1::zeros(d),
                        w_in: mat(d, d),
                        b_in: Array1::zeros(d),
                        w_hn: mat(d, d),
                        b_hn: Array1::zeros(d),
                    })
                    .collect(),
            },
        };
        Self {
            dims,
            backend,
            e_v,
            e_g,
            w_a,
            b_a: Array1::zeros(d),
            w_r,
            b_r: Array1::zeros(d),
            encoder,
        }
    }

    /// Same shapes, all zeros; the gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, data| data.fill(0.0));
        z
    }

    pub fn n_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, data, _| n += data.len());
        n
    }

    /// Calls `f(name, data, shape)` for every tensor in a stable order.
    pub fn visit(&self, f: &mut impl FnMut(&str, &[f64], &[usize])) {
        let t1 = |f: &mut dyn FnMut(&str, &[f64], &[usize]), name: &str, a: &Array1<f64>| {
            f(name, a.as_slice().unwrap(), &[a.len()]);
        };
        let t2 = |f: &mut dyn FnMut(&str, &[f64], &[usize]), name: &str, a: &Array2<f64>| {
            f(name, a.as_slice().unwrap(), &[a.nrows(), a.ncols()]);
        };
        t2(f, "e_v", &self.e_v);
        t2(f, "e_g", &self.e_g);
        t2(f, "w_a", &self.w_a);
        t1(f, "b_a", &self.b_a);
        t2(f, "w_r", &self.w_r);
        t1(f, "b_r", &self.b_r);
        match &self.encoder {
            EncoderParams::SelfAttention { layers, final_ln } => {
                for (i, l) in layers.iter().enumerate() {
                    let n = |s: &str| format!("enc{i}.{s}");
                    t1(f, &n("ln1.gamma"), &l.ln1.gamma);
                    t1(f, &n("ln1.beta"), &l.ln1.beta);
                    t2(f, &n("w_q"), &l.w_q);
                    t1(f, &n("b_q"), &l.b_q);
                    t2(f, &n("w_k"), &l.w_k);
                    t1(f, &n("b_k"), &l.b_k);
                    t2(f, &n("w_v"), &l.w_v);
                    t1(f, &n("b_v"), &l.b_v);
                    t2(f, &n("w_o"), &l.w_o);
                    t1(f, &n("b_o"), &l.b_o);
                    t1(f, &n("ln2.gamma"), &l.ln2.gamma);
                    t1(f, &n("ln2.beta"), &l.ln2.beta);
                    t2(f, &n("w_ff1"), &l.w_ff1);
                    t1(f, &n("b_ff1"), &l.b_ff1);
                    t2(f, &n("w_ff2"), &l.w_ff2);
                    t1(f, &n("b_ff2"), &l.b_ff2);
                }
                t1(f, "final_ln.gamma", &final_ln.gamma);
                t1(f, "final_ln.beta", &final_ln.beta);
            }
            EncoderParams::Gru { layers } => {
                for (i, l) in layers.iter().enumerate() {
                    let n = |s: &str| format!("gru{i}.{s}");
                    t2(f, &n("w_ir"), &l.w_ir);
                    t2(f, &n("w_hr"), &l.w_hr);
                    t1(f, &n("b_r"), &l.b_r);
                    t2(f, &n("w_iz"), &l.w_iz);
                    t2(f, &n("w_hz"), &l.w_hz);
                    t1(f, &n("b_z"), &l.b_z);
                    t2(f, &n("w_in"), &l.w_in);
                    t1(f, &n("b_in"), &l.b_in);
                    t2(f, &n("w_hn"), &l.w_hn);
                    t1(f, &n("b_hn"), &l.b_hn);
                }
            }
        }
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut [f64])) {
        let t1 = |f: &mut dyn FnMut(&str, &mut [f64]), name: &str, a: &mut Array1<f64>| {
            f(name, a.as_slice_mut().unwrap());
        };
        let t2 = |f: &mut dyn FnMut(&str, &mut [f64]), name: &str, a: &mut Array2<f64>| {
            f(name, a.as_slice_mut().unwrap());
        };
        t2(f, "e_v", &mut self.e_v);
        t2(f, "e_g", &mut self.e_g);
        t2(f, "w_a", &mut self.w_a);
        t1(f, "b_a", &mut self.b_a);
        t2(f, "w_r", &mut self.w_r);
        t1(f, "b_r", &mut self.b_r);
        match &mut self.encoder {
            EncoderParams::SelfAttention { layers, final_ln } => {
                for (i, l) in layers.iter_mut().enumerate() {
                    let n = |s: &str| format!("enc{i}.{s}");
                    t1(f, &n("ln1.gamma"), &mut l.ln1.gamma);
                    t1(f, &n("ln1.beta"), &mut l.ln1.beta);
                    t2(f, &n("w_q"), &mut l.w_q);
                    t1(f, &n("b_q"), &mut l.b_q);
                    t2(f, &n("w_k"), &mut l.w_k);
                    t1(f, &n("b_k"), &mut l.b_k);
                    t2(f, &n("w_v"), &mut l.w_v);
                    t1(f, &n("b_v"), &mut l.b_v);
                    t2(f, &n("w_o"), &mut l.w_o);
                    t1(f, &n("b_o"), &mut l.b_o);
                    t1(f, &n("ln2.gamma"), &mut l.ln2.gamma);
                    t1(f, &n("ln2.beta"), &mut l.ln2.beta);
                    t2(f, &n("w_ff1"), &mut l.w_ff1);
                    t1(f, &n("b_ff1"), &mut l.b_ff1);
                    t2(f, &n("w_ff2"), &mut l.w_ff2);
                    t1(f, &n("b_ff2"), &mut l.b_ff2);
                }
                t1(f, "final_ln.gamma", &mut final_ln.gamma);
                t1(f, "final_ln.beta", &mut final_ln.beta);
            }
            EncoderParams::Gru { layers } => {
                for (i, l) in layers.iter_mut().enumerate() {
                    let n = |s: &str| format!("gru{i}.{s}");
                    t2(f, &n("w_ir"), &mut l.w_ir);
                    t2(f, &n("w_hr"), &mut l.w_hr);
                    t1(f, &n("b_r"), &mut l.b_r);
                    t2(f, &n("w_iz"), &mut l.w_iz);
                    t2(f, &n("w_hz"), &mut l.w_hz);
                    t1(f, &n("b_z"), &mut l.b_z);
                    t2(f, &n("w_in"), &mut l.w_in);
                    t1(f, &n("b_in"), &mut l.b_in);
                    t2(f, &n("w_hn"), &mut l.w_hn);
                    t1(f, &n("b_hn"), &mut l.b_hn);
                }
            }
        }
    }

    /// Flattens every tensor into one vector (visit order).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        self.visit(&mut |_, data, _| out.extend_from_slice(data));
        out
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, data, _| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }
}
