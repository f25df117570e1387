use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::rwt::{BinningStats, StartFunction};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained predictor with everything generation needs: binning, the
/// function set, α and k.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub stats: BinningStats,
    pub functions: Vec<StartFunction>,
    pub alpha: f64,
    pub k: usize,
    pub params: ModelParams,
}

// Floats are written as the hex of their bit pattern so a save/load round
// trip is bit-exact regardless of decimal formatting.
fn hex(x: f64) -> String {
    format!("0x{:016x}", x.to_bits())
}

fn unhex(s: &str) -> Result<f64> {
    let digits = s
        .strip_prefix("0x")
        .ok_or_else(|| Error::Checkpoint(format!("bad float encoding {s:?}")))?;
    u64::from_str_radix(digits, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Checkpoint(format!("bad float encoding {s:?}")))
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    mu: String,
    sigma: String,
    c: String,
    bin_lo: i64,
    bin_hi: i64,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    shape: [usize; 2],
    data: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    config: ModelConfig,
    binning_stats: StatsDoc,
    #[serde(rename = "F")]
    functions: Vec<StartFunction>,
    alpha: String,
    k: usize,
    tensors: BTreeMap<String, TensorDoc>,
}

impl Checkpoint {
    /// Checks that the metadata agrees with the model configuration.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.config.num_bins != self.stats.num_bins() {
            return Err(Error::Checkpoint(format!(
                "model has {} value bins but binning covers {}",
                self.config.num_bins,
                self.stats.num_bins()
            )));
        }
        if self.config.n_functions != self.functions.len() {
            return Err(Error::Checkpoint("function set size does not match the model".into()));
        }
        if self.config.max_step != self.k {
            return Err(Error::Checkpoint("step embedding range does not match k".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Checkpoint(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !self.params.all_finite() {
            return Err(Error::Checkpoint("parameters are not finite".into()));
        }
        Ok(())
    }

    /// Predicts the previous trajectory vector from `v` at input step `step`.
    pub fn predict(&self, v: &[f64], f_index: usize, step: usize) -> Result<Vec<f64>> {
        self.params.forward(&self.config, v, f_index, step, &self.stats)
    }

    pub fn to_json(&self) -> String {
        let tensors = self
            .params
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                let doc = TensorDoc {
                    shape: [t.nrows(), t.ncols()],
                    data: t.iter().map(|&x| hex(x)).collect(),
                };
                (name, doc)
            })
            .collect();
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            binning_stats: StatsDoc {
                mu: hex(self.stats.mu),
                sigma: hex(self.stats.sigma),
                c: hex(self.stats.c),
                bin_lo: self.stats.bin_lo,
                bin_hi: self.stats.bin_hi,
            },
            functions: self.functions.clone(),
            alpha: hex(self.alpha),
            k: self.k,
            tensors,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
        match version.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(CHECKPOINT_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "checkpoint format version {v} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("corrupt checkpoint: no format_version".into())),
        }
        let mut doc: CheckpointDoc = serde_json::from_value(version)
            .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;

        let stats = BinningStats {
            mu: unhex(&doc.binning_stats.mu)?,
            sigma: unhex(&doc.binning_stats.sigma)?,
            c: unhex(&doc.binning_stats.c)?,
            bin_lo: doc.binning_stats.bin_lo,
            bin_hi: doc.binning_stats.bin_hi,
        };
        if stats.bin_lo > stats.bin_hi {
            return Err(Error::Checkpoint("empty bin range".into()));
        }
        let mut params = ModelParams::init(&doc.config)?;
        for (name, slot) in params.tensors_mut() {
            let t = doc
                .tensors
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != [slot.nrows(), slot.ncols()] || t.data.len() != slot.len() {
                return Err(Error::Checkpoint(format!("tensor {name} has the wrong shape")));
            }
            let data = t.data.iter().map(|s| unhex(s)).collect::<Result<Vec<_>>>()?;
            *slot = Array2::from_shape_vec((t.shape[0], t.shape[1]), data)
                .expect("shape checked above");
        }
        if let Some(extra) = doc.tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        let ckpt = Checkpoint {
            config: doc.config,
            stats,
            functions: doc.functions,
            alpha: unhex(&doc.alpha)?,
            k: doc.k,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
