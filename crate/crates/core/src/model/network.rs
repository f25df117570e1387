//! Forward pass with activation caching and the matching backward pass.

use ndarray::{s, Array1, Array2, Axis};

use super::{LayerParams, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::rwt::BinningStats;

const LN_EPS: f64 = 1e-5;

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    norm1: NormCache,
    attn_in: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    /// Attention weights per head, `n × n`.
    probs: Vec<Array2<f64>>,
    heads: Array2<f64>,
    norm2: NormCache,
    ffn_in: Array2<f64>,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
}

/// Activations saved by [`ModelParams::forward_cached`] for the backward pass.
pub struct ForwardCache {
    values: Vec<f64>,
    bins: Vec<usize>,
    f_index: usize,
    step: usize,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    final_out: Array2<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, NormCache) {
    let width = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / width;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * *inv);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Returns `dx` and accumulates into `dgain`, `dbias`.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gain;
    let width = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        for ((o, &gi), &xi) in out.iter_mut().zip(g.iter()).zip(xh.iter()) {
            *o = inv / width * (width * gi - sum_g - xi * sum_gx);
        }
    }
    dx
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
}

impl ModelParams {
    fn check_inputs(&self, config: &ModelConfig, v: &[f64], f_index: usize, step: usize) -> Result<()> {
        if v.is_empty() {
            return Err(Error::Precondition("input vector is empty".into()));
        }
        if f_index >= config.n_functions {
            return Err(Error::Precondition(format!(
                "function index {f_index} out of range (model has {})",
                config.n_functions
            )));
        }
        if step == 0 || step > config.max_step {
            return Err(Error::Precondition(format!(
                "step {step} outside 1..={}",
                config.max_step
            )));
        }
        Ok(())
    }

    /// Predicts the previous trajectory vector from `v` at position `step`.
    pub fn forward(
        &self,
        config: &ModelConfig,
        v: &[f64],
        f_index: usize,
        step: usize,
        stats: &BinningStats,
    ) -> Result<Vec<f64>> {
        self.check_inputs(config, v, f_index, step)?;
        Ok(self.forward_cached(config, v, f_index, step, stats).0)
    }

    /// Forward pass that also returns the activations needed by
    /// [`ModelParams::backward`]. Inputs are assumed validated.
    pub fn forward_cached(
        &self,
        config: &ModelConfig,
        v: &[f64],
        f_index: usize,
        step: usize,
        stats: &BinningStats,
    ) -> (Vec<f64>, ForwardCache) {
        let n = v.len();
        let m = config.m;
        let bins: Vec<usize> = v.iter().map(|&x| stats.index(x)).collect();

        let shared = &self.function_embeddings.row(f_index) + &self.step_embeddings.row(step - 1);
        let mut x = Array2::zeros((n, m));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row.assign(&self.value_embeddings.row(bins[i]));
            row *= v[i];
            row += &shared;
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer_forward(layer, config, x);
            x = next;
            layers.push(cache);
        }

        let (final_out, final_norm) = layer_norm(&x, &self.final_gain, &self.final_bias);
        let proj = final_out.dot(&self.proj_weight);
        let bias = self.proj_bias[[0, 0]];
        let out: Vec<f64> = proj.column(0).iter().map(|p| p + bias).collect();
        let cache = ForwardCache {
            values: v.to_vec(),
            bins,
            f_index,
            step,
            layers,
            final_norm,
            final_out,
        };
        (out, cache)
    }

    /// Gradient of `Σ_i d_out[i] · out[i]` with respect to every parameter.
    pub fn backward(&self, config: &ModelConfig, cache: &ForwardCache, d_out: &[f64]) -> ModelParams {
        let mut grad = self.zeros_like();
        let n = d_out.len();
        let d_proj = Array2::from_shape_vec((n, 1), d_out.to_vec()).expect("shape");

        grad.proj_bias[[0, 0]] = d_out.iter().sum();
        grad.proj_weight = cache.final_out.t().dot(&d_proj);
        let d_final = d_proj.dot(&self.proj_weight.t());
        let mut dx = layer_norm_backward(
            &d_final,
            &cache.final_norm,
            &self.final_gain,
            &mut grad.final_gain,
            &mut grad.final_bias,
        );

        for ((layer, lcache), lgrad) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            dx = layer_backward(layer, config, lcache, lgrad, dx);
        }

        let shared = dx.sum_axis(Axis(0));
        grad.function_embeddings.row_mut(cache.f_index).scaled_add(1.0, &shared);
        grad.step_embeddings.row_mut(cache.step - 1).scaled_add(1.0, &shared);
        for (i, row) in dx.rows().into_iter().enumerate() {
            grad.value_embeddings
                .row_mut(cache.bins[i])
                .scaled_add(cache.values[i], &row);
        }
        grad
    }
}

fn layer_forward(layer: &LayerParams, config: &ModelConfig, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
    let n = x.nrows();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let (attn_in, norm1) = layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias);
    let query = attn_in.dot(&layer.w_query) + &layer.b_query;
    let key = attn_in.dot(&layer.w_key) + &layer.b_key;
    let value = attn_in.dot(&layer.w_value) + &layer.b_value;

    let mut heads = Array2::zeros((n, config.m));
    let mut probs = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = query.slice(cols).dot(&key.slice(cols).t());
        scores *= scale;
        softmax_rows(&mut scores);
        heads.slice_mut(cols).assign(&scores.dot(&value.slice(cols)));
        probs.push(scores);
    }
    let residual = x + &(heads.dot(&layer.w_out) + &layer.b_out);

    let (ffn_in, norm2) = layer_norm(&residual, &layer.ln2_gain, &layer.ln2_bias);
    let pre_relu = ffn_in.dot(&layer.w_ff1) + &layer.b_ff1;
    let hidden = pre_relu.mapv(|u| u.max(0.0));
    let out = &residual + &(hidden.dot(&layer.w_ff2) + &layer.b_ff2);

    let cache = LayerCache {
        norm1,
        attn_in,
        query,
        key,
        value,
        probs,
        heads,
        norm2,
        ffn_in,
        pre_relu,
        hidden,
    };
    (out, cache)
}

fn layer_backward(
    layer: &LayerParams,
    config: &ModelConfig,
    cache: &LayerCache,
    grad: &mut LayerParams,
    d_out: Array2<f64>,
) -> Array2<f64> {
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // Feed-forward branch: out = residual + relu(LN2(residual) W1 + b1) W2 + b2.
    grad.b_ff2 += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    grad.w_ff2 += &cache.hidden.t().dot(&d_out);
    let mut d_pre = d_out.dot(&layer.w_ff2.t());
    d_pre.zip_mut_with(&cache.pre_relu, |d, &u| {
        if u <= 0.0 {
            *d = 0.0;
        }
    });
    grad.b_ff1 += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    grad.w_ff1 += &cache.ffn_in.t().dot(&d_pre);
    let d_ffn_in = d_pre.dot(&layer.w_ff1.t());
    let mut d_residual = layer_norm_backward(
        &d_ffn_in,
        &cache.norm2,
        &layer.ln2_gain,
        &mut grad.ln2_gain,
        &mut grad.ln2_bias,
    );
    d_residual += &d_out;

    // Attention branch: residual = x + heads W_o + b_o.
    grad.b_out += &d_residual.sum_axis(Axis(0)).insert_axis(Axis(0));
    grad.w_out += &cache.heads.t().dot(&d_residual);
    let d_heads = d_residual.dot(&layer.w_out.t());

    let mut d_query = Array2::zeros(cache.query.raw_dim());
    let mut d_key = Array2::zeros(cache.key.raw_dim());
    let mut d_value = Array2::zeros(cache.value.raw_dim());
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_head = d_heads.slice(cols);
        let d_probs = d_head.dot(&cache.value.slice(cols).t());
        d_value.slice_mut(cols).assign(&probs.t().dot(&d_head));
        let mut d_scores = d_probs;
        for (mut row, p) in d_scores.rows_mut().into_iter().zip(probs.rows()) {
            let dot = row.dot(&p);
            row.zip_mut_with(&p, |d, &pi| *d = pi * (*d - dot));
        }
        d_scores *= scale;
        d_query.slice_mut(cols).assign(&d_scores.dot(&cache.key.slice(cols)));
        d_key.slice_mut(cols).assign(&d_scores.t().dot(&cache.query.slice(cols)));
    }

    let mut d_attn_in = Array2::zeros(cache.attn_in.raw_dim());
    for (d, w, dw, db) in [
        (&d_query, &layer.w_query, &mut grad.w_query, &mut grad.b_query),
        (&d_key, &layer.w_key, &mut grad.w_key, &mut grad.b_key),
        (&d_value, &layer.w_value, &mut grad.w_value, &mut grad.b_value),
    ] {
        *db += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
        *dw += &cache.attn_in.t().dot(d);
        d_attn_in += &d.dot(&w.t());
    }
    let mut dx = layer_norm_backward(
        &d_attn_in,
        &cache.norm1,
        &layer.ln1_gain,
        &mut grad.ln1_gain,
        &mut grad.ln1_bias,
    );
    dx += &d_residual;
    dx
}
