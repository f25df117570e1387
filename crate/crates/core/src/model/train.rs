use std::collections::BTreeMap;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rwt::{BinningStats, TrainingPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    /// Examples per batch; batches never mix graph sizes.
    pub batch_size: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 1e-3,
            epochs: 200,
            batch_size: 8,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example MSE over the training split, one entry per epoch.
    pub train_mse: Vec<f64>,
    /// Held-out MSE; entry 0 is measured before the first update.
    pub heldout_mse: Vec<f64>,
    pub epochs_run: usize,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    /// Hex FNV-1a checksum of the returned parameters.
    pub checksum: String,
    /// Set when training stopped on a non-finite loss; the returned
    /// parameters are those of the last finite epoch.
    pub aborted: Option<String>,
}

impl TrainReport {
    pub fn initial_heldout(&self) -> f64 {
        self.heldout_mse[0]
    }

    pub fn final_heldout(&self) -> f64 {
        *self.heldout_mse.last().expect("initial entry always present")
    }

    /// `epoch,train_mse,heldout_mse` rows; epoch 0 has no training loss.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,heldout_mse\n");
        for (epoch, held) in self.heldout_mse.iter().enumerate() {
            let train = if epoch == 0 {
                String::new()
            } else {
                format!("{:e}", self.train_mse[epoch - 1])
            };
            out.push_str(&format!("{epoch},{train},{held:e}\n"));
        }
        out
    }
}

/// Pairs with `index % HOLDOUT_STRIDE == HOLDOUT_STRIDE - 1` are held out.
const HOLDOUT_STRIDE: usize = 10;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    first: ModelParams,
    second: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            first: params.zeros_like(),
            second: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

fn example_mse(
    params: &ModelParams,
    config: &ModelConfig,
    pair: &TrainingPair,
    stats: &BinningStats,
) -> f64 {
    let (out, _) = params.forward_cached(config, &pair.input, pair.f_index, pair.step, stats);
    out.iter()
        .zip(&pair.target)
        .map(|(o, t)| (o - t).powi(2))
        .sum::<f64>()
        / out.len() as f64
}

/// Loss and gradient of one example's mean squared error.
pub(crate) fn example_gradient(
    params: &ModelParams,
    config: &ModelConfig,
    pair: &TrainingPair,
    stats: &BinningStats,
) -> (f64, ModelParams) {
    let (out, cache) = params.forward_cached(config, &pair.input, pair.f_index, pair.step, stats);
    let n = out.len() as f64;
    let resid: Vec<f64> = out.iter().zip(&pair.target).map(|(o, t)| o - t).collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let d_out: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();
    (loss, params.backward(config, &cache, &d_out))
}

fn mean_mse(
    params: &ModelParams,
    config: &ModelConfig,
    pairs: &[&TrainingPair],
    stats: &BinningStats,
    exec: Execution,
) -> f64 {
    let losses = par::map_slice(exec, pairs, |p| example_mse(params, config, p, stats));
    losses.iter().sum::<f64>() / losses.len() as f64
}

fn validate_pairs(config: &ModelConfig, pairs: &[TrainingPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Precondition("no training pairs".into()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if p.input.len() != p.target.len() || p.input.is_empty() {
            return Err(Error::Precondition(format!("pair {i} has mismatched vector lengths")));
        }
        if p.f_index >= config.n_functions || p.step == 0 || p.step > config.max_step {
            return Err(Error::Precondition(format!(
                "pair {i} (function {}, step {}) does not fit the model configuration",
                p.f_index, p.step
            )));
        }
    }
    Ok(())
}

/// Minimizes the mean squared reverse-step error with Adam.
///
/// Every tenth pair (by index) is held out. Each epoch groups the training
/// pairs by graph size, shuffles within groups, cuts batches of
/// `batch_size`, and shuffles the batch order; the shuffles are seeded by
/// `opts.seed` and the epoch number. Per-example gradients may be computed in
/// parallel but are summed in batch order, so results do not depend on the
/// execution mode.
pub fn train(
    mut params: ModelParams,
    config: &ModelConfig,
    pairs: &[TrainingPair],
    stats: &BinningStats,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    validate_pairs(config, pairs)?;
    if opts.batch_size == 0 || !(opts.lr > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }

    let (mut train_set, mut heldout): (Vec<usize>, Vec<usize>) =
        (0..pairs.len()).partition(|i| i % HOLDOUT_STRIDE != HOLDOUT_STRIDE - 1);
    if heldout.is_empty() {
        log::warn!("too few pairs for a held-out split; validating on the training pairs");
        heldout = train_set.clone();
    }
    if train_set.is_empty() {
        train_set = heldout.clone();
    }
    let heldout_refs: Vec<&TrainingPair> = heldout.iter().map(|&i| &pairs[i]).collect();

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &train_set {
        groups.entry(pairs[i].n()).or_default().push(i);
    }

    let mut report = TrainReport {
        train_mse: Vec::with_capacity(opts.epochs),
        heldout_mse: vec![mean_mse(&params, config, &heldout_refs, stats, opts.exec)],
        epochs_run: 0,
        train_pairs: train_set.len(),
        heldout_pairs: heldout.len(),
        checksum: String::new(),
        aborted: None,
    };
    let mut adam = Adam::new(&params);
    let mut last_good = params.clone();

    for epoch in 0..opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for members in groups.values() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            batches.extend(shuffled.chunks(opts.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in &batches {
            let results = par::map_slice(opts.exec, batch, |&i| {
                example_gradient(&params, config, &pairs[i], stats)
            });
            let mut grad = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                grad.add_scaled(g, scale);
            }
            adam.step(&mut params, &grad, opts.lr);
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let held = mean_mse(&params, config, &heldout_refs, stats, opts.exec);

        if !train_mse.is_finite() || !held.is_finite() || !params.all_finite() {
            let msg = format!("non-finite loss in epoch {}; keeping epoch {epoch} parameters", epoch + 1);
            log::error!("{msg}");
            report.aborted = Some(msg);
            params = last_good;
            break;
        }
        log::debug!("epoch {}: train {train_mse:.6e} held-out {held:.6e}", epoch + 1);
        report.train_mse.push(train_mse);
        report.heldout_mse.push(held);
        report.epochs_run = epoch + 1;
        last_good.clone_from(&params);
    }
    report.checksum = format!("{:016x}", params.checksum());
    Ok((params, report))
}
