//! Pre-LayerNorm transformer encoder with span heads, forward and backward.
//!
//! Input layout is `[question; SEP; context]`. Each block computes
//! `x += Attn(LN(x))` then `x += FFN(LN(x))`; a final LayerNorm feeds two
//! linear heads that score every context position as answer start or end.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::features::{EncodedInput, N_SEGMENTS};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

/// All trainable tensors. `token_emb` is `vocab × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    /// Rows indexed by the input's segment ids.
    pub segment_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Array1<f64>,
    pub lnf_bias: Array1<f64>,
    pub start_w: Array1<f64>,
    pub start_b: Array1<f64>,
    pub end_w: Array1<f64>,
    pub end_b: Array1<f64>,
}

/// Shape parameters needed to allocate an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl LayerParams {
    fn zeros(d: usize, ff: usize) -> Self {
        LayerParams {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            w_q: Array2::zeros((d, d)),
            b_q: Array1::zeros(d),
            w_k: Array2::zeros((d, d)),
            b_k: Array1::zeros(d),
            w_v: Array2::zeros((d, d)),
            b_v: Array1::zeros(d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w_ff1: Array2::zeros((d, ff)),
            b_ff1: Array1::zeros(ff),
            w_ff2: Array2::zeros((ff, d)),
            b_ff2: Array1::zeros(d),
        }
    }

    fn init<R: Rng>(rng: &mut R, d: usize, ff: usize, n_layers: usize) -> Self {
        let in_std = 1.0 / (d as f64).sqrt();
        let out_scale = 1.0 / (2.0 * n_layers as f64).sqrt();
        LayerParams {
            ln1_gain: Array1::ones(d),
            w_q: normal_matrix(rng, d, d, in_std),
            w_k: normal_matrix(rng, d, d, in_std),
            w_v: normal_matrix(rng, d, d, in_std),
            w_o: normal_matrix(rng, d, d, in_std * out_scale),
            ln2_gain: Array1::ones(d),
            w_ff1: normal_matrix(rng, d, ff, in_std),
            w_ff2: normal_matrix(rng, ff, d, out_scale / (ff as f64).sqrt()),
            ..LayerParams::zeros(d, ff)
        }
    }

    fn views(&self) -> Vec<ArrayViewD<'_, f64>> {
        vec![
            self.ln1_gain.view().into_dyn(),
            self.ln1_bias.view().into_dyn(),
            self.w_q.view().into_dyn(),
            self.b_q.view().into_dyn(),
            self.w_k.view().into_dyn(),
            self.b_k.view().into_dyn(),
            self.w_v.view().into_dyn(),
            self.b_v.view().into_dyn(),
            self.w_o.view().into_dyn(),
            self.b_o.view().into_dyn(),
            self.ln2_gain.view().into_dyn(),
            self.ln2_bias.view().into_dyn(),
            self.w_ff1.view().into_dyn(),
            self.b_ff1.view().into_dyn(),
            self.w_ff2.view().into_dyn(),
            self.b_ff2.view().into_dyn(),
        ]
    }

    fn views_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        vec![
            self.ln1_gain.view_mut().into_dyn(),
            self.ln1_bias.view_mut().into_dyn(),
            self.w_q.view_mut().into_dyn(),
            self.b_q.view_mut().into_dyn(),
            self.w_k.view_mut().into_dyn(),
            self.b_k.view_mut().into_dyn(),
            self.w_v.view_mut().into_dyn(),
            self.b_v.view_mut().into_dyn(),
            self.w_o.view_mut().into_dyn(),
            self.b_o.view_mut().into_dyn(),
            self.ln2_gain.view_mut().into_dyn(),
            self.ln2_bias.view_mut().into_dyn(),
            self.w_ff1.view_mut().into_dyn(),
            self.b_ff1.view_mut().into_dyn(),
            self.w_ff2.view_mut().into_dyn(),
            self.b_ff2.view_mut().into_dyn(),
        ]
    }
}

const LAYER_TENSOR_NAMES: [&str; 16] = [
    "ln1_gain", "ln1_bias", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln2_gain",
    "ln2_bias", "w_ff1", "b_ff1", "w_ff2", "b_ff2",
];

fn sinusoidal(max_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_len, d), |(pos, i)| {
        let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl EncoderParams {
    pub fn zeros(dims: Dims) -> Self {
        let d = dims.hidden;
        EncoderParams {
            token_emb: Array2::zeros((dims.vocab, d)),
            pos_emb: Array2::zeros((dims.max_seq_len, d)),
            segment_emb: Array2::zeros((N_SEGMENTS, d)),
            layers: (0..dims.layers).map(|_| LayerParams::zeros(d, dims.ffn)).collect(),
            lnf_gain: Array1::zeros(d),
            lnf_bias: Array1::zeros(d),
            start_w: Array1::zeros(d),
            start_b: Array1::zeros(1),
            end_w: Array1::zeros(d),
            end_b: Array1::zeros(1),
        }
    }

    /// Seeded initialization. Position embeddings start from the sinusoidal
    /// table and are trained like every other tensor.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        let d = dims.hidden;
        let head_std = 1.0 / (d as f64).sqrt();
        let token_emb = normal_matrix(rng, dims.vocab, d, 1.0);
        let segment_emb = normal_matrix(rng, N_SEGMENTS, d, 1.0);
        let layers = (0..dims.layers)
            .map(|_| LayerParams::init(rng, d, dims.ffn, dims.layers))
            .collect();
        let start_w = normal_matrix(rng, 1, d, head_std).remove_axis(Axis(0));
        let end_w = normal_matrix(rng, 1, d, head_std).remove_axis(Axis(0));
        EncoderParams {
            token_emb,
            pos_emb: sinusoidal(dims.max_seq_len, d),
            segment_emb,
            layers,
            lnf_gain: Array1::ones(d),
            lnf_bias: Array1::zeros(d),
            start_w,
            start_b: Array1::zeros(1),
            end_w,
            end_b: Array1::zeros(1),
        }
    }

    /// Named tensors in canonical order (used by checkpoints).
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            ("token_emb".to_string(), self.token_emb.view().into_dyn()),
            ("pos_emb".to_string(), self.pos_emb.view().into_dyn()),
            ("segment_emb".to_string(), self.segment_emb.view().into_dyn()),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, view) in LAYER_TENSOR_NAMES.iter().zip(layer.views()) {
                out.push((format!("layers.{l}.{name}"), view));
            }
        }
        out.extend([
            ("lnf_gain".to_string(), self.lnf_gain.view().into_dyn()),
            ("lnf_bias".to_string(), self.lnf_bias.view().into_dyn()),
            ("start_w".to_string(), self.start_w.view().into_dyn()),
            ("start_b".to_string(), self.start_b.view().into_dyn()),
            ("end_w".to_string(), self.end_w.view().into_dyn()),
            ("end_b".to_string(), self.end_b.view().into_dyn()),
        ]);
        out
    }

    /// Mutable tensors in the same order as [`EncoderParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = vec![
            self.token_emb.view_mut().into_dyn(),
            self.pos_emb.view_mut().into_dyn(),
            self.segment_emb.view_mut().into_dyn(),
        ];
        for layer in &mut self.layers {
            out.extend(layer.views_mut());
        }
        out.extend([
            self.lnf_gain.view_mut().into_dyn(),
            self.lnf_bias.view_mut().into_dyn(),
            self.start_w.view_mut().into_dyn(),
            self.start_b.view_mut().into_dyn(),
            self.end_w.view_mut().into_dyn(),
            self.end_b.view_mut().into_dyn(),
        ]);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every value in canonical tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.named_tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Inverse of [`EncoderParams::to_flat`]; `values` must have
    /// [`EncoderParams::n_parameters`] entries.
    pub fn assign_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_parameters(), "flat parameter length");
        let mut it = values.iter();
        for mut t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *it.next().unwrap());
        }
    }
}

/// Gradients with sparse token-embedding rows. `dense.token_emb` is unused
/// (zero rows); touched rows live in `token_rows`.
#[derive(Debug, Clone)]
pub struct Grads {
    pub token_rows: BTreeMap<u32, Array1<f64>>,
    pub dense: EncoderParams,
}

impl Grads {
    pub fn zeros(dims: Dims) -> Self {
        Grads {
            token_rows: BTreeMap::new(),
            dense: EncoderParams::zeros(Dims { vocab: 0, ..dims }),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (id, row) in &other.token_rows {
            match self.token_rows.get_mut(id) {
                Some(acc) => *acc += row,
                None => {
                    self.token_rows.insert(*id, row.clone());
                }
            }
        }
        for (mut a, b) in self.dense.tensors_mut().into_iter().zip(other.dense.named_tensors()) {
            a += &b.1;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.token_rows.values_mut() {
            *row *= factor;
        }
        for mut t in self.dense.tensors_mut() {
            t *= factor;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        let rows: f64 = self.token_rows.values().map(|r| r.dot(r)).sum();
        let dense: f64 = self
            .dense
            .named_tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum();
        rows + dense
    }

    /// Dense token-embedding gradient of shape `vocab × hidden`.
    pub fn token_dense(&self, vocab: usize, hidden: usize) -> Array2<f64> {
        let mut g = Array2::zeros((vocab, hidden));
        for (&id, row) in &self.token_rows {
            g.row_mut(id as usize).assign(row);
        }
        g
    }

    /// Flattened like [`EncoderParams::to_flat`] for a model with `vocab` types.
    pub fn to_flat(&self, vocab: usize) -> Vec<f64> {
        let hidden = self.dense.pos_emb.ncols();
        let mut out: Vec<f64> = self.token_dense(vocab, hidden).iter().copied().collect();
        for (_, t) in self.dense.named_tensors().into_iter().skip(1) {
            out.extend(t.iter().copied());
        }
        out
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(cache.xhat.rows())
        .and(&cache.inv_std)
        .for_each(|mut out, g, xh, &s| {
            let mean_g = g.sum() / d;
            let mean_gx = g.dot(&xh) / d;
            Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| {
                *o = s * (gi - mean_g - xi * mean_gx);
            });
        });
    dx
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn_ctx: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    ids: Vec<u32>,
    segments: Vec<u8>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Array2<f64>,
    context_offset: usize,
    context_len: usize,
}

/// Start and end logits over the context positions only.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLogits {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

fn head_logits(hf: &Array2<f64>, w: &Array1<f64>, b: f64, offset: usize, len: usize) -> Vec<f64> {
    hf.slice(s![offset..offset + len, ..])
        .rows()
        .into_iter()
        .map(|row| row.dot(w) + b)
        .collect()
}

fn add_bias(mut m: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    m += b;
    m
}

/// Runs the encoder; returns context logits plus the cache for backward.
pub fn forward(params: &EncoderParams, heads: usize, input: &EncodedInput) -> (SpanLogits, ForwardCache) {
    let t_len = input.ids.len();
    let d = params.token_emb.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut x = Array2::zeros((t_len, d));
    for (t, &id) in input.ids.iter().enumerate() {
        let mut row = x.row_mut(t);
        row.assign(&params.token_emb.row(id as usize));
        row += &params.pos_emb.row(t);
        row += &params.segment_emb.row(input.segments[t] as usize);
    }

    let mut caches = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (h1, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = add_bias(h1.dot(&lp.w_q), &lp.b_q);
        let k = add_bias(h1.dot(&lp.w_k), &lp.b_k);
        let v = add_bias(h1.dot(&lp.w_v), &lp.b_v);
        let mut attn_ctx = Array2::zeros((t_len, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            softmax_rows(&mut scores);
            attn_ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        x = x + add_bias(attn_ctx.dot(&lp.w_o), &lp.b_o);

        let (h2, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
        let ff_pre = add_bias(h2.dot(&lp.w_ff1), &lp.b_ff1);
        let ff_act = ff_pre.mapv(|z| z.max(0.0));
        x = x + add_bias(ff_act.dot(&lp.w_ff2), &lp.b_ff2);

        caches.push(LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            attn_ctx,
            ln2,
            h2,
            ff_pre,
            ff_act,
        });
    }

    let (hf, lnf) = layer_norm(&x, &params.lnf_gain, &params.lnf_bias);
    let (off, len) = (input.context_offset, input.context_len);
    let logits = SpanLogits {
        start: head_logits(&hf, &params.start_w, params.start_b[0], off, len),
        end: head_logits(&hf, &params.end_w, params.end_b[0], off, len),
    };
    let cache = ForwardCache {
        ids: input.ids.clone(),
        segments: input.segments.clone(),
        layers: caches,
        lnf,
        hf,
        context_offset: off,
        context_len: len,
    };
    (logits, cache)
}

fn outer_add(acc: &mut Array2<f64>, a: &Array2<f64>, b: &Array2<f64>) {
    // acc += aᵀ b
    ndarray::linalg::general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

/// Backpropagates `∂L/∂start_logits` and `∂L/∂end_logits`.
pub fn backward(
    params: &EncoderParams,
    heads: usize,
    cache: &ForwardCache,
    d_start: &[f64],
    d_end: &[f64],
) -> Grads {
    let d = params.token_emb.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let t_len = cache.ids.len();
    let mut g = Grads::zeros(Dims {
        vocab: 0,
        hidden: d,
        ffn: params.layers.first().map_or(0, |l| l.b_ff1.len()),
        layers: params.layers.len(),
        heads,
        max_seq_len: params.pos_emb.nrows(),
    });

    let mut d_hf = Array2::zeros((t_len, d));
    for i in 0..cache.context_len {
        let t = cache.context_offset + i;
        let row: ArrayView1<f64> = cache.hf.row(t);
        g.dense.start_w.scaled_add(d_start[i], &row);
        g.dense.end_w.scaled_add(d_end[i], &row);
        g.dense.start_b[0] += d_start[i];
        g.dense.end_b[0] += d_end[i];
        let mut dr = d_hf.row_mut(t);
        dr.scaled_add(d_start[i], &params.start_w);
        dr.scaled_add(d_end[i], &params.end_w);
    }
    let mut dx = layer_norm_backward(
        &d_hf,
        &cache.lnf,
        &params.lnf_gain,
        &mut g.dense.lnf_gain,
        &mut g.dense.lnf_bias,
    );

    for (l, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut g.dense.layers[l];

        // feed-forward sublayer
        outer_add(&mut lg.w_ff2, &lc.ff_act, &dx);
        lg.b_ff2 += &dx.sum_axis(Axis(0));
        let mut d_ff = dx.dot(&lp.w_ff2.t());
        Zip::from(&mut d_ff).and(&lc.ff_pre).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        outer_add(&mut lg.w_ff1, &lc.h2, &d_ff);
        lg.b_ff1 += &d_ff.sum_axis(Axis(0));
        let d_h2 = d_ff.dot(&lp.w_ff1.t());
        dx += &layer_norm_backward(&d_h2, &lc.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);

        // attention sublayer
        outer_add(&mut lg.w_o, &lc.attn_ctx, &dx);
        lg.b_o += &dx.sum_axis(Axis(0));
        let d_ctx = dx.dot(&lp.w_o.t());
        let mut d_q = Array2::zeros((t_len, d));
        let mut d_k = Array2::zeros((t_len, d));
        let mut d_v = Array2::zeros((t_len, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let probs = &lc.probs[h];
            let d_ctx_h = d_ctx.slice(cols);
            let d_probs = d_ctx_h.dot(&lc.v.slice(cols).t());
            d_v.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
            let mut d_scores = probs * &d_probs;
            let row_sums = d_scores.sum_axis(Axis(1));
            d_scores = probs * &(d_probs - &row_sums.insert_axis(Axis(1)));
            d_scores *= scale;
            d_q.slice_mut(cols).assign(&d_scores.dot(&lc.k.slice(cols)));
            d_k.slice_mut(cols).assign(&d_scores.t().dot(&lc.q.slice(cols)));
        }
        outer_add(&mut lg.w_q, &lc.h1, &d_q);
        outer_add(&mut lg.w_k, &lc.h1, &d_k);
        outer_add(&mut lg.w_v, &lc.h1, &d_v);
        lg.b_q += &d_q.sum_axis(Axis(0));
        lg.b_k += &d_k.sum_axis(Axis(0));
        lg.b_v += &d_v.sum_axis(Axis(0));
        let d_h1 = d_q.dot(&lp.w_q.t()) + d_k.dot(&lp.w_k.t()) + d_v.dot(&lp.w_v.t());
        dx += &layer_norm_backward(&d_h1, &lc.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);
    }

    for (t, &id) in cache.ids.iter().enumerate() {
        let row = dx.row(t);
        g.dense.pos_emb.row_mut(t).scaled_add(1.0, &row);
        g.dense.segment_emb.row_mut(cache.segments[t] as usize).scaled_add(1.0, &row);
        match g.token_rows.get_mut(&id) {
            Some(acc) => acc.scaled_add(1.0, &row),
            None => {
                g.token_rows.insert(id, row.to_owned());
            }
        }
    }
    g
}
