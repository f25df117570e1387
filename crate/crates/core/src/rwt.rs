//! Smoothed random-walk trajectories: starting vectors, the deterministic
//! evolution `v, Lv, …, L^k v`, supervised reverse-step pairs, and the value
//! binning used by the reverse model's embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, Graph, SmoothedOperator};
use crate::par::{self, Execution};

/// Power-law start function `f(d) = d^β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StartFunction {
    pub beta: i32,
}

impl StartFunction {
    pub const fn new(beta: i32) -> Self {
        StartFunction { beta }
    }

    pub fn eval(self, degree: usize) -> f64 {
        (degree as f64).powi(self.beta)
    }

    /// `{d, 1/d, d², 1/d²}`.
    pub fn default_set() -> Vec<StartFunction> {
        [1, -1, 2, -2].into_iter().map(StartFunction::new).collect()
    }
}

/// `v_i = n f(d_i) / Σ_j f(d_j)`; entries are positive and sum to `n`.
pub fn starting_vector(degrees: &DegreeSequence, f: StartFunction) -> Result<Vec<f64>> {
    degrees.require_positive()?;
    let weights: Vec<f64> = degrees.as_slice().iter().map(|&d| f.eval(d)).collect();
    let total: f64 = weights.iter().sum();
    let n = degrees.len() as f64;
    Ok(weights.into_iter().map(|w| n * w / total).collect())
}

/// `k + 1` vectors `v, Lv, …, L^k v` for one graph and start function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub graph_id: usize,
    pub f_beta: i32,
    pub alpha: f64,
    pub k: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl Trajectory {
    /// JSON debug dump.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

pub fn build_rwt(
    graph: &Graph,
    graph_id: usize,
    f: StartFunction,
    alpha: f64,
    k: usize,
) -> Result<Trajectory> {
    if k == 0 {
        return Err(Error::Precondition("trajectories need at least one step".into()));
    }
    if !graph.is_connected() {
        log::warn!("graph {graph_id} is disconnected; its trajectory has no unique limit");
    }
    let op = SmoothedOperator::new(graph, alpha)?;
    let start = starting_vector(&graph.degrees(), f)?;
    Ok(Trajectory {
        graph_id,
        f_beta: f.beta,
        alpha,
        k,
        vectors: iterate(&op, start, k),
    })
}

/// `[x, Lx, …, L^k x]` by repeated matvec.
pub fn iterate(op: &SmoothedOperator<'_>, start: Vec<f64>, k: usize) -> Vec<Vec<f64>> {
    let mut vectors = Vec::with_capacity(k + 1);
    vectors.push(start);
    for j in 0..k {
        let next = op.apply(&vectors[j]);
        vectors.push(next);
    }
    vectors
}

/// One reverse step: predict `target = v_{step-1}` from `input = v_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// Position of the start function in the function set.
    pub f_index: usize,
    /// Index of the input vector within its trajectory, in `1..=k`.
    pub step: usize,
    pub graph_id: usize,
}

impl TrainingPair {
    pub fn n(&self) -> usize {
        self.input.len()
    }
}

/// All consecutive pairs of all trajectories, ordered by graph, then start
/// function, then step. Yields `|graphs| · |functions| · k` pairs.
pub fn build_training_set(
    graphs: &[Graph],
    functions: &[StartFunction],
    alpha: f64,
    k: usize,
    exec: Execution,
) -> Result<Vec<TrainingPair>> {
    if graphs.is_empty() || functions.is_empty() {
        return Err(Error::Precondition(
            "training set needs at least one graph and one start function".into(),
        ));
    }
    let jobs = graphs.len() * functions.len();
    let trajectories = par::map_indexed(exec, jobs, |job| {
        let (g, fi) = (job / functions.len(), job % functions.len());
        build_rwt(&graphs[g], g, functions[fi], alpha, k).map(|t| (fi, t))
    });
    let mut pairs = Vec::with_capacity(jobs * k);
    for result in trajectories {
        let (f_index, traj) = result?;
        for step in 1..=k {
            pairs.push(TrainingPair {
                input: traj.vectors[step].clone(),
                target: traj.vectors[step - 1].clone(),
                f_index,
                step,
                graph_id: traj.graph_id,
            });
        }
    }
    Ok(pairs)
}

/// Parameters of the value binning `B(x) = ⌊c (x − μ) / σ⌋`, clamped to the
/// range of bins seen in training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningStats {
    pub mu: f64,
    pub sigma: f64,
    pub c: f64,
    pub bin_lo: i64,
    pub bin_hi: i64,
}

impl BinningStats {
    /// Unclamped bin.
    pub fn raw_bin(&self, x: f64) -> i64 {
        let b = (self.c * (x - self.mu) / self.sigma).floor();
        // Saturate instead of wrapping for absurd inputs.
        b.clamp(i64::MIN as f64 / 2.0, i64::MAX as f64 / 2.0) as i64
    }

    pub fn bin_value(&self, x: f64) -> i64 {
        self.raw_bin(x).clamp(self.bin_lo, self.bin_hi)
    }

    /// Clamped bins, elementwise.
    pub fn bin(&self, v: &[f64]) -> Vec<i64> {
        v.iter().map(|&x| self.bin_value(x)).collect()
    }

    /// Row of the value-embedding table for `x`.
    pub fn index(&self, x: f64) -> usize {
        (self.bin_value(x) - self.bin_lo) as usize
    }

    pub fn num_bins(&self) -> usize {
        (self.bin_hi - self.bin_lo + 1) as usize
    }
}

/// Mean and (population) standard deviation over every entry of every input
/// and target vector; the bin range covers all of those entries.
pub fn binning_stats(pairs: &[TrainingPair], c: f64) -> Result<BinningStats> {
    if !(c > 0.0) {
        return Err(Error::Precondition(format!("bin width parameter c = {c} must be positive")));
    }
    let entries = || pairs.iter().flat_map(|p| p.input.iter().chain(&p.target)).copied();
    let count = entries().count();
    if count == 0 {
        return Err(Error::Degenerate("no training entries".into()));
    }
    let mu = entries().sum::<f64>() / count as f64;
    let var = entries().map(|x| (x - mu).powi(2)).sum::<f64>() / count as f64;
    let sigma = var.sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Degenerate(format!(
            "training entries have standard deviation {sigma}; binning is undefined"
        )));
    }
    let mut stats = BinningStats {
        mu,
        sigma,
        c,
        bin_lo: 0,
        bin_hi: 0,
    };
    let (lo, hi) = entries().fold((i64::MAX, i64::MIN), |(lo, hi), x| {
        let b = stats.raw_bin(x);
        (lo.min(b), hi.max(b))
    });
    stats.bin_lo = lo;
    stats.bin_hi = hi;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn starting_vectors_on_path() {
        let d = path3().degrees();
        assert_close(&starting_vector(&d, StartFunction::new(1)).unwrap(), &[0.75, 1.5, 0.75], 1e-15);
        assert_close(&starting_vector(&d, StartFunction::new(-1)).unwrap(), &[1.2, 0.6, 1.2], 1e-15);
        let regular = cycle(5).degrees();
        for beta in [1, -1, 2, -2] {
            assert_close(&starting_vector(&regular, StartFunction::new(beta)).unwrap(), &[1.0; 5], 1e-15);
        }
        assert!(starting_vector(&DegreeSequence::new(vec![1, 0, 1]), StartFunction::new(1)).is_err());
    }

    #[test]
    fn regular_graph_trajectory_is_fixed() {
        let t = build_rwt(&triangle(), 0, StartFunction::new(1), 0.9, 10).unwrap();
        assert_eq!(t.vectors.len(), 11);
        for v in &t.vectors {
            assert_close(v, &[1.0; 3], 1e-14);
        }
    }

    #[test]
    fn one_step_on_path_by_hand() {
        // d' = (1.0, 1.1, 1.0); L = [[.9, .1/√1.1, 0], [.1/√1.1, .9/1.1, .1/√1.1], [0, .1/√1.1, .9]].
        let t = build_rwt(&path3(), 0, StartFunction::new(1), 0.9, 1).unwrap();
        let s = 1.1f64.sqrt();
        let expect = [
            0.9 * 0.75 + 0.1 / s * 1.5,
            0.1 / s * 0.75 + 0.9 / 1.1 * 1.5 + 0.1 / s * 0.75,
            0.1 / s * 1.5 + 0.9 * 0.75,
        ];
        assert_close(&t.vectors[1], &expect, 1e-14);
    }

    #[test]
    fn training_set_shape() {
        let graphs = vec![path3(), triangle(), cycle(6)];
        let fs = StartFunction::default_set();
        let pairs = build_training_set(&graphs, &fs, 0.9, 10, Execution::Sequential).unwrap();
        assert_eq!(pairs.len(), 3 * 4 * 10);
        let one = build_training_set(&graphs[..1], &fs[..1], 0.9, 1, Execution::Sequential).unwrap();
        assert_eq!(one.len(), 1);
        for p in &pairs {
            let g = &graphs[p.graph_id];
            let op = SmoothedOperator::new(g, 0.9).unwrap();
            let forward = op.apply(&p.target);
            assert_close(&forward, &p.input, 1e-12);
            assert!((1..=10).contains(&p.step));
        }
        let par = build_training_set(&graphs, &fs, 0.9, 10, Execution::Parallel).unwrap();
        assert_eq!(pairs, par);
    }

    #[test]
    fn binning_formula() {
        let pair = TrainingPair {
            input: vec![0.0, 0.0],
            target: vec![2.0, 2.0],
            f_index: 0,
            step: 1,
            graph_id: 0,
        };
        let stats = binning_stats(&[pair], 3.0).unwrap();
        assert_eq!(stats.mu, 1.0);
        assert_eq!(stats.sigma, 1.0);
        assert_eq!(stats.raw_bin(1.5), 1);
        assert_eq!((stats.bin_lo, stats.bin_hi), (-3, 3));
        assert_eq!(stats.num_bins(), 7);
        assert_eq!(stats.bin(&[1.0, 1.0, 1.0]), vec![0, 0, 0]);
        // μ + 10σ clamps to the top bin.
        assert_eq!(stats.bin_value(11.0), 3);
        assert_eq!(stats.index(-50.0), 0);
    }

    #[test]
    fn binning_floor_arithmetic() {
        let stats = BinningStats {
            mu: 0.0,
            sigma: 1.0,
            c: 3.0,
            bin_lo: -10,
            bin_hi: 10,
        };
        assert_eq!(stats.bin(&[0.5, -0.4]), vec![1, -2]);
    }

    #[test]
    fn constant_entries_are_degenerate() {
        let pair = TrainingPair {
            input: vec![1.0; 4],
            target: vec![1.0; 4],
            f_index: 0,
            step: 1,
            graph_id: 0,
        };
        assert!(matches!(binning_stats(&[pair], 3.0), Err(Error::Degenerate(_))));
    }
}
