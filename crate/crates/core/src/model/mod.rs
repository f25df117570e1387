//! Permutation-equivariant reverse-step predictor.
//!
//! Each node is one token carrying one scalar. A token enters the network as
//! `v_i · E[bin(v_i)] + F[f] + S[step]`, passes through pre-norm attention
//! blocks with full bidirectional attention (no positional information, no
//! mask), and is projected back to a scalar. Nothing in the network depends
//! on token position, so permuting the input permutes the output, and any
//! sequence length is accepted.
//!
//! Gradients are computed by hand-written reverse-mode differentiation in
//! [`network`]; `tests` checks them against central finite differences.

mod checkpoint;
mod network;
mod train;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use network::ForwardCache;
pub use train::{train, TrainOptions, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub m: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    /// Size of the value-bin vocabulary.
    pub num_bins: usize,
    pub n_functions: usize,
    /// Largest step index the step embedding covers (the trajectory length k).
    pub max_step: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("m", self.m),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_hidden", self.ffn_hidden),
            ("num_bins", self.num_bins),
            ("n_functions", self.n_functions),
            ("max_step", self.max_step),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model size {name} must be at least 1")));
        }
        if !self.m.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "embedding dimension {} is not divisible by {} heads",
                self.m, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.m / self.n_heads
    }
}

/// Weights of one pre-norm attention block. Biases are stored as `1 × width`
/// matrices so every tensor has the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub w_query: Array2<f64>,
    pub b_query: Array2<f64>,
    pub w_key: Array2<f64>,
    pub b_key: Array2<f64>,
    pub w_value: Array2<f64>,
    pub b_value: Array2<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array2<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub value_embeddings: Array2<f64>,
    pub function_embeddings: Array2<f64>,
    pub step_embeddings: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array2<f64>,
    pub final_bias: Array2<f64>,
    pub proj_weight: Array2<f64>,
    pub proj_bias: Array2<f64>,
}

macro_rules! layer_fields {
    ($mac:ident) => {
        $mac!(
            ln1_gain, ln1_bias, w_query, b_query, w_key, b_key, w_value, b_value, w_out, b_out,
            ln2_gain, ln2_bias, w_ff1, b_ff1, w_ff2, b_ff2
        )
    };
}

impl LayerParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        macro_rules! collect {
            ($($f:ident),*) => { vec![$((stringify!($f), &self.$f)),*] };
        }
        layer_fields!(collect)
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
        macro_rules! collect {
            ($($f:ident),*) => { vec![$((stringify!($f), &mut self.$f)),*] };
        }
        layer_fields!(collect)
    }
}

impl ModelParams {
    /// Seeded initialization: dense weights `N(0, 1/fan_in)`, embeddings
    /// `N(0, 0.02²)`, layer-norm gains one, biases zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut normal = |rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
        };
        let (m, h) = (config.m, config.ffn_hidden);
        let dense = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();

        let value_embeddings = normal(config.num_bins, m, 0.02);
        let function_embeddings = normal(config.n_functions, m, 0.02);
        let step_embeddings = normal(config.max_step, m, 0.02);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                ln1_gain: Array2::ones((1, m)),
                ln1_bias: Array2::zeros((1, m)),
                w_query: normal(m, m, dense(m)),
                b_query: Array2::zeros((1, m)),
                w_key: normal(m, m, dense(m)),
                b_key: Array2::zeros((1, m)),
                w_value: normal(m, m, dense(m)),
                b_value: Array2::zeros((1, m)),
                w_out: normal(m, m, dense(m)),
                b_out: Array2::zeros((1, m)),
                ln2_gain: Array2::ones((1, m)),
                ln2_bias: Array2::zeros((1, m)),
                w_ff1: normal(m, h, dense(m)),
                b_ff1: Array2::zeros((1, h)),
                w_ff2: normal(h, m, dense(h)),
                b_ff2: Array2::zeros((1, m)),
            });
        }
        let proj_weight = normal(m, 1, dense(m));
        Ok(ModelParams {
            value_embeddings,
            function_embeddings,
            step_embeddings,
            layers,
            final_gain: Array2::ones((1, m)),
            final_bias: Array2::zeros((1, m)),
            proj_weight,
            proj_bias: Array2::zeros((1, 1)),
        })
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("value_embeddings".to_string(), &self.value_embeddings),
            ("function_embeddings".to_string(), &self.function_embeddings),
            ("step_embeddings".to_string(), &self.step_embeddings),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("final_gain".to_string(), &self.final_gain));
        out.push(("final_bias".to_string(), &self.final_bias));
        out.push(("proj_weight".to_string(), &self.proj_weight));
        out.push(("proj_bias".to_string(), &self.proj_bias));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("value_embeddings".to_string(), &mut self.value_embeddings),
            ("function_embeddings".to_string(), &mut self.function_embeddings),
            ("step_embeddings".to_string(), &mut self.step_embeddings),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(
                layer
                    .tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.push(("final_gain".to_string(), &mut self.final_gain));
        out.push(("final_bias".to_string(), &mut self.final_bias));
        out.push(("proj_weight".to_string(), &mut self.proj_weight));
        out.push(("proj_bias".to_string(), &mut self.proj_bias));
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// FNV-1a over the bit patterns of every parameter, in tensor order.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.tensors() {
            for x in t.iter() {
                for byte in x.to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        hash
    }
}
