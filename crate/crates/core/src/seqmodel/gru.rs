//! Stacked gated-recurrent-unit encoder with exact backpropagation through
//! time.

use ndarray::{Array2, Axis};

use super::params::GruLayerParams;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct LayerCache {
    /// Layer input, slot-major (B*N, d).
    x: Array2<f64>,
    /// Hidden states h_0..h_N, each (B, d); h_0 is zero.
    h: Vec<Array2<f64>>,
    r: Vec<Array2<f64>>,
    z: Vec<Array2<f64>>,
    n_gate: Vec<Array2<f64>>,
    /// Cached `h_prev . w_hn + b_hn` inside the candidate gate.
    hn_aff: Vec<Array2<f64>>,
}

pub(super) struct GruCache {
    layers: Vec<LayerCache>,
    batch: usize,
    n: usize,
}

fn gather_t(x: &Array2<f64>, b_count: usize, n: usize, t: usize) -> Array2<f64> {
    let d = x.ncols();
    let mut out = Array2::zeros((b_count, d));
    for b in 0..b_count {
        out.row_mut(b).assign(&x.row(b * n + t));
    }
    out
}

pub(super) fn gru_forward(
    layers: &[GruLayerParams],
    h0: Array2<f64>,
    b_count: usize,
    n: usize,
) -> (Array2<f64>, GruCache) {
    let d = h0.ncols();
    let mut input = h0;
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let mut cache = LayerCache {
            x: input,
            h: vec![Array2::zeros((b_count, d))],
            r: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            n_gate: Vec::with_capacity(n),
            hn_aff: Vec::with_capacity(n),
        };
        let mut output = Array2::zeros((b_count * n, d));
        for t in 0..n {
            let x_t = gather_t(&cache.x, b_count, n, t);
            let h_prev = cache.h.last().unwrap();
            let r = (x_t.dot(&layer.w_ir) + h_prev.dot(&layer.w_hr) + &layer.b_r)
                .mapv(sigmoid);
            let z = (x_t.dot(&layer.w_iz) + h_prev.dot(&layer.w_hz) + &layer.b_z)
                .mapv(sigmoid);
            let hn_aff = h_prev.dot(&layer.w_hn) + &layer.b_hn;
            let n_gate = (x_t.dot(&layer.w_in) + &layer.b_in + &(&r * &hn_aff)).mapv(f64::tanh);
            let h = (1.0 - &z) * &n_gate + &z * h_prev;
            for b in 0..b_count {
                output.row_mut(b * n + t).assign(&h.row(b));
            }
            cache.r.push(r);
            cache.z.push(z);
            cache.n_gate.push(n_gate);
            cache.hn_aff.push(hn_aff);
            cache.h.push(h);
        }
        caches.push(cache);
        input = output;
    }
    (input, GruCache { layers: caches, batch: b_count, n })
}

/// Backpropagates `dout` through all layers and timesteps; returns the
/// gradient w.r.t. the embedded input.
pub(super) fn gru_backward(
    layers: &[GruLayerParams],
    cache: &GruCache,
    dout: Array2<f64>,
    grad_layers: &mut [GruLayerParams],
) -> Array2<f64> {
    let (b_count, n) = (cache.batch, cache.n);
    let d = dout.ncols();
    let mut dout = dout;
    for (li, layer) in layers.iter().enumerate().rev() {
        let lc = &cache.layers[li];
        let gl = &mut grad_layers[li];
        let mut dx = Array2::zeros((b_count * n, d));
        let mut dh_carry: Array2<f64> = Array2::zeros((b_count, d));
        for t in (0..n).rev() {
            let mut dh = gather_t(&dout, b_count, n, t);
            dh += &dh_carry;

            let h_prev = &lc.h[t];
            let r = &lc.r[t];
            let z = &lc.z[t];
            let n_gate = &lc.n_gate[t];
            let hn_aff = &lc.hn_aff[t];
            let x_t = gather_t(&lc.x, b_count, n, t);

            // h = (1 - z) * n + z * h_prev
            let dz = &dh * &(h_prev - n_gate);
            let dn = &dh * &(1.0 - z);
            dh_carry = &dh * z;

            let dn_pre = &dn * &(1.0 - n_gate * n_gate);
            gl.w_in += &x_t.t().dot(&dn_pre);
            gl.b_in += &dn_pre.sum_axis(Axis(0));
            let mut dx_t = dn_pre.dot(&layer.w_in.t());

            let dr = &dn_pre * hn_aff;
            let dhn_aff = &dn_pre * r;
            gl.w_hn += &h_prev.t().dot(&dhn_aff);
            gl.b_hn += &dhn_aff.sum_axis(Axis(0));
            dh_carry += &dhn_aff.dot(&layer.w_hn.t());

            let dr_pre = &dr * &(r * &(1.0 - r));
            gl.w_ir += &x_t.t().dot(&dr_pre);
            gl.b_r += &dr_pre.sum_axis(Axis(0));
            dx_t += &dr_pre.dot(&layer.w_ir.t());
            gl.w_hr += &h_prev.t().dot(&dr_pre);
            dh_carry += &dr_pre.dot(&layer.w_hr.t());

            let dz_pre = &dz * &(z * &(1.0 - z));
            gl.w_iz += &x_t.t().dot(&dz_pre);
            gl.b_z += &dz_pre.sum_axis(Axis(0));
            dx_t += &dz_pre.dot(&layer.w_iz.t());
            gl.w_hz += &h_prev.t().dot(&dz_pre);
            dh_carry += &dz_pre.dot(&layer.w_hz.t());

            for b in 0..b_count {
                dx.row_mut(b * n + t).assign(&dx_t.row(b));
            }
        }
        dout = dx;
    }
    dout
}
