//! Pipeline configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `alpha` | 0.9 | smoothing α of the walk operator |
//! | `k` | 10 | trajectory length |
//! | `c` | 3 | bin width parameter |
//! | `betas` | 1,-1,2,-2 | start functions `d^β` |
//! | `m`, `n_layers`, `n_heads`, `ffn_hidden` | 64, 2, 4, 128 | reverse model size |
//! | `lr`, `epochs`, `batch_size` | 0.001, 200, 8 | training |
//! | `solver_method` | lp | `lp` (exact linear program) or `gradient` |
//! | `solver_max_iters`, `solver_lr`, `solver_degree_penalty`, `solver_huber_delta`, `solver_tolerance` | 5000, 0.05, 10, 0.001, 1e-10 | gradient method only |
//! | `exact_limit` | 12 | largest n routed to the exact solver |
//! | `exact_node_limit` | 200000 | search nodes before the exact solver settles for its best graph |
//! | `degree_source` | perturb | `perturb`, `powerlaw` or `lognormal` |
//! | `flip_fraction` | 0.1 | share of degrees resampled by `perturb` |
//! | `ensure_connected` | false | run connectivity repair on generated graphs |
//! | `seed` | 0 | master seed |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::DegreeFamily;
use crate::infer::{ConvexMethod, ExactOptions, SolveOptions, DEFAULT_EXACT_LIMIT, DEFAULT_NODE_LIMIT};
use crate::model::{ModelConfig, TrainOptions};
use crate::rwt::StartFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    Perturb,
    Powerlaw,
    Lognormal,
}

impl DegreeMode {
    pub fn family(self) -> Option<DegreeFamily> {
        match self {
            DegreeMode::Perturb => None,
            DegreeMode::Powerlaw => Some(DegreeFamily::PowerLaw),
            DegreeMode::Lognormal => Some(DegreeFamily::Lognormal),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegreeMode::Perturb => "perturb",
            DegreeMode::Powerlaw => "powerlaw",
            DegreeMode::Lognormal => "lognormal",
        }
    }
}

impl FromStr for DegreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perturb" => Ok(DegreeMode::Perturb),
            "powerlaw" => Ok(DegreeMode::Powerlaw),
            "lognormal" => Ok(DegreeMode::Lognormal),
            _ => Err(Error::Config(format!("unknown degree source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub k: usize,
    pub c: f64,
    pub betas: Vec<i32>,
    pub m: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub solver_method: ConvexMethod,
    pub solver_max_iters: usize,
    pub solver_lr: f64,
    pub solver_degree_penalty: f64,
    pub solver_huber_delta: f64,
    pub solver_tolerance: f64,
    pub exact_limit: usize,
    pub exact_node_limit: u64,
    pub degree_source: DegreeMode,
    pub flip_fraction: f64,
    pub ensure_connected: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let solver = SolveOptions::default();
        let train = TrainOptions::default();
        PipelineConfig {
            alpha: 0.9,
            k: 10,
            c: 3.0,
            betas: vec![1, -1, 2, -2],
            m: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_hidden: 128,
            lr: train.lr,
            epochs: train.epochs,
            batch_size: train.batch_size,
            solver_method: solver.method,
            solver_max_iters: solver.max_iters,
            solver_lr: solver.learning_rate,
            solver_degree_penalty: solver.degree_penalty,
            solver_huber_delta: solver.huber_delta,
            solver_tolerance: solver.tolerance,
            exact_limit: DEFAULT_EXACT_LIMIT,
            exact_node_limit: DEFAULT_NODE_LIMIT,
            degree_source: DegreeMode::Perturb,
            flip_fraction: 0.1,
            ensure_connected: false,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 23] = [
        "alpha",
        "k",
        "c",
        "betas",
        "m",
        "n_layers",
        "n_heads",
        "ffn_hidden",
        "lr",
        "epochs",
        "batch_size",
        "solver_method",
        "solver_max_iters",
        "solver_lr",
        "solver_degree_penalty",
        "solver_huber_delta",
        "solver_tolerance",
        "exact_limit",
        "exact_node_limit",
        "degree_source",
        "flip_fraction",
        "ensure_connected",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "alpha" => self.alpha = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "betas" => {
                self.betas = value
                    .split(',')
                    .map(|b| parse(key, b.trim()))
                    .collect::<Result<_>>()?
            }
            "m" => self.m = parse(key, value)?,
            "n_layers" => self.n_layers = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "ffn_hidden" => self.ffn_hidden = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "solver_method" => self.solver_method = value.parse()?,
            "solver_max_iters" => self.solver_max_iters = parse(key, value)?,
            "solver_lr" => self.solver_lr = parse(key, value)?,
            "solver_degree_penalty" => self.solver_degree_penalty = parse(key, value)?,
            "solver_huber_delta" => self.solver_huber_delta = parse(key, value)?,
            "solver_tolerance" => self.solver_tolerance = parse(key, value)?,
            "exact_limit" => self.exact_limit = parse(key, value)?,
            "exact_node_limit" => self.exact_node_limit = parse(key, value)?,
            "degree_source" => self.degree_source = value.parse()?,
            "flip_fraction" => self.flip_fraction = parse(key, value)?,
            "ensure_connected" => self.ensure_connected = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config("c must be positive".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::Config("betas must name at least one start function".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(Error::Config("flip_fraction must lie in [0, 1]".into()));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("lr and batch_size must be positive".into()));
        }
        self.model_config(1)?;
        Ok(())
    }

    pub fn functions(&self) -> Vec<StartFunction> {
        self.betas.iter().map(|&b| StartFunction::new(b)).collect()
    }

    pub fn model_config(&self, num_bins: usize) -> Result<ModelConfig> {
        let config = ModelConfig {
            m: self.m,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_hidden: self.ffn_hidden,
            num_bins,
            n_functions: self.betas.len(),
            max_step: self.k,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainOptions::default()
        }
    }

    pub fn solve_options(&self, seed: u64) -> SolveOptions {
        SolveOptions {
            method: self.solver_method,
            max_iters: self.solver_max_iters,
            learning_rate: self.solver_lr,
            degree_penalty: self.solver_degree_penalty,
            huber_delta: self.solver_huber_delta,
            tolerance: self.solver_tolerance,
            seed,
        }
    }

    pub fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            n_limit: self.exact_limit,
            node_limit: self.exact_node_limit,
        }
    }

    /// The config in its own file format. Floats use Rust's shortest
    /// round-trip formatting, so `apply_text(to_text())` is lossless.
    pub fn to_text(&self) -> String {
        let betas: Vec<String> = self.betas.iter().map(i32::to_string).collect();
        let values = [
            self.alpha.to_string(),
            self.k.to_string(),
            self.c.to_string(),
            betas.join(","),
            self.m.to_string(),
            self.n_layers.to_string(),
            self.n_heads.to_string(),
            self.ffn_hidden.to_string(),
            self.lr.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            match self.solver_method {
                ConvexMethod::Lp => "lp".to_string(),
                ConvexMethod::Gradient => "gradient".to_string(),
            },
            self.solver_max_iters.to_string(),
            self.solver_lr.to_string(),
            self.solver_degree_penalty.to_string(),
            self.solver_huber_delta.to_string(),
            self.solver_tolerance.to_string(),
            self.exact_limit.to_string(),
            self.exact_node_limit.to_string(),
            self.degree_source.name().to_string(),
            self.flip_fraction.to_string(),
            self.ensure_connected.to_string(),
            self.seed.to_string(),
        ];
        let mut out = String::new();
        for (key, value) in Self::KEYS.iter().zip(values) {
            writeln!(out, "{key} = {value}").expect("string write");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!((cfg.alpha, cfg.k, cfg.c), (0.9, 10, 3.0));
        assert_eq!(cfg.betas, vec![1, -1, 2, -2]);
        assert_eq!(cfg.degree_source, DegreeMode::Perturb);
        assert!(!cfg.ensure_connected);
        cfg.validate().unwrap();
    }

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut cfg = PipelineConfig::default();
        cfg.alpha = 0.7;
        cfg.betas = vec![2, -1];
        cfg.solver_tolerance = 3.5e-9;
        cfg.solver_method = ConvexMethod::Gradient;
        cfg.degree_source = DegreeMode::Lognormal;
        cfg.ensure_connected = true;
        let text = cfg.to_text();
        assert_eq!(text.lines().count(), PipelineConfig::KEYS.len());
        let mut back = PipelineConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nk = 6\n\nalpha=0.5\n").unwrap();
        let cfg = PipelineConfig::resolve(Some(&path), &[("alpha".into(), "0.8".into())]).unwrap();
        assert_eq!((cfg.k, cfg.alpha, cfg.c), (6, 0.8, 3.0));
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut cfg = PipelineConfig::default();
        for text in ["nokey", "alpha = x", "colour = red", "degree_source = zipf", "solver_method = newton"] {
            assert!(matches!(cfg.apply_text(text), Err(Error::Config(_))), "{text}");
        }
        for (key, value) in [("alpha", "1.0"), ("k", "1"), ("n_heads", "3"), ("flip_fraction", "2")] {
            let err = PipelineConfig::resolve(None, &[(key.into(), value.into())]);
            assert!(matches!(err, Err(Error::Config(_))), "{key}");
        }
    }
}
