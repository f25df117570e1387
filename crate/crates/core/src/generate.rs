//! Degree-sequence generation, the closed-form ending vector, and the
//! backward rollout that turns a trained predictor into a trajectory system.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::smoothed_degree;
use crate::graph::{DegreeSequence, Graph};
use crate::model::Checkpoint;
use crate::par::{self, Execution};
use crate::rwt::StartFunction;

/// Decrements the two largest entries until the sequence is graphical.
/// Entries must already lie in `[1, n-1]` with an even sum.
fn enforce_graphical(mut d: Vec<usize>) -> Result<DegreeSequence> {
    let budget = d.iter().sum::<usize>() / 2 + 1;
    for _ in 0..budget {
        let seq = DegreeSequence::new(d.clone());
        if seq.is_graphical() {
            return Ok(seq);
        }
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(d[i]), i));
        let (a, b) = (order[0], order[1]);
        if d[a] <= 1 || d[b] <= 1 {
            break;
        }
        d[a] -= 1;
        d[b] -= 1;
    }
    Err(Error::DegreeGeneration(format!("could not repair degree sequence {d:?}")))
}

/// Clamps into `[1, n-1]`, fixes parity on one of `candidates`, then
/// enforces Erdős–Gallai.
fn repair(mut d: Vec<usize>, candidates: &[usize], rng: &mut ChaCha8Rng) -> Result<DegreeSequence> {
    let n = d.len();
    if n < 2 {
        return Err(Error::DegreeGeneration("a graph needs at least two nodes".into()));
    }
    for x in d.iter_mut() {
        *x = (*x).clamp(1, n - 1);
    }
    if d.iter().sum::<usize>() % 2 == 1 {
        let pool: Vec<usize> = if candidates.is_empty() { (0..n).collect() } else { candidates.to_vec() };
        let i = pool[rng.random_range(0..pool.len())];
        let up = if d[i] == 1 {
            true
        } else if d[i] == n - 1 {
            false
        } else {
            rng.random_bool(0.5)
        };
        if up {
            d[i] += 1;
        } else {
            d[i] -= 1;
        }
        // n = 2 with degrees (1, 1) is already even, so this cannot leave the range.
    }
    enforce_graphical(d)
}

/// Resamples `⌈flip_fraction · n⌉` random nodes' degrees from the graph's own
/// degree multiset, then repairs the result into a graphical sequence.
pub fn perturb_degrees(graph: &Graph, flip_fraction: f64, seed: u64) -> Result<DegreeSequence> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(Error::Precondition(format!("flip fraction {flip_fraction} outside [0, 1]")));
    }
    let source = graph.degrees().into_inner();
    let n = source.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flips = ((flip_fraction * n as f64).ceil() as usize).min(n);
    let chosen = sample_indices(&mut rng, n, flips).into_vec();
    let mut d = source.clone();
    for &i in &chosen {
        d[i] = source[rng.random_range(0..n)];
    }
    repair(d, &chosen, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeFamily {
    PowerLaw,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DegreeModel {
    /// Discrete power law `P(d) ∝ d^{-exponent}` for `d ≥ x_min`.
    PowerLaw { exponent: f64, x_min: usize },
    /// `ln d ~ N(log_mean, log_sd²)`.
    Lognormal { log_mean: f64, log_sd: f64 },
}

/// Maximum-likelihood exponent for the tail `d ≥ x_min`, using the usual
/// continuous approximation with a half-integer shift.
fn power_law_exponent(tail: &[f64], x_min: usize) -> f64 {
    let shift = x_min as f64 - 0.5;
    let log_sum: f64 = tail.iter().map(|d| (d / shift).ln()).sum();
    1.0 + tail.len() as f64 / log_sum
}

fn power_law_ks(tail: &[f64], x_min: usize, exponent: f64) -> f64 {
    let shift = x_min as f64 - 0.5;
    let m = tail.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < tail.len() {
        let mut j = i;
        while j < tail.len() && tail[j] == tail[i] {
            j += 1;
        }
        let model = 1.0 - ((tail[i] + 0.5) / shift).powf(1.0 - exponent);
        worst = worst.max((j as f64 / m - model).abs());
        i = j;
    }
    worst
}

const MIN_TAIL: usize = 10;

/// Fits a degree model to the pooled degrees of a corpus.
///
/// The power law picks `x_min` by minimizing the Kolmogorov–Smirnov distance
/// over candidate cut-offs with at least ten tail points; the lognormal
/// matches the mean and population standard deviation of `ln d`.
pub fn fit_degree_model(graphs: &[Graph], family: DegreeFamily) -> Result<DegreeModel> {
    let mut pooled: Vec<usize> = graphs.iter().flat_map(|g| g.degrees().into_inner()).collect();
    if pooled.is_empty() {
        return Err(Error::Precondition("degree fit needs a nonempty corpus".into()));
    }
    if pooled.contains(&0) {
        return Err(Error::Precondition("corpus contains isolated nodes".into()));
    }
    pooled.sort_unstable();
    match family {
        DegreeFamily::Lognormal => {
            let logs: Vec<f64> = pooled.iter().map(|&d| (d as f64).ln()).collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / logs.len() as f64;
            Ok(DegreeModel::Lognormal {
                log_mean: mean,
                log_sd: var.sqrt(),
            })
        }
        DegreeFamily::PowerLaw => {
            if pooled.first() == pooled.last() {
                return Err(Error::Degenerate(
                    "all degrees are equal; no power law fits (use the perturbed empirical source)".into(),
                ));
            }
            let mut candidates = pooled.clone();
            candidates.dedup();
            let mut best: Option<(f64, usize, f64)> = None;
            for &x_min in &candidates {
                let start = pooled.partition_point(|&d| d < x_min);
                let tail: Vec<f64> = pooled[start..].iter().map(|&d| d as f64).collect();
                if tail.len() < MIN_TAIL.min(pooled.len()) || tail.first() == tail.last() {
                    continue;
                }
                let exponent = power_law_exponent(&tail, x_min);
                let ks = power_law_ks(&tail, x_min, exponent);
                if best.is_none_or(|(b, _, _)| ks < b) {
                    best = Some((ks, x_min, exponent));
                }
            }
            let (_, x_min, exponent) = best.ok_or_else(|| {
                Error::Degenerate("too few distinct degrees for a power-law fit".into())
            })?;
            Ok(DegreeModel::PowerLaw { exponent, x_min })
        }
    }
}

/// Draws `n` degrees from the model and repairs them like
/// [`perturb_degrees`].
pub fn sample_degrees(model: &DegreeModel, n: usize, seed: u64) -> Result<DegreeSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = n.saturating_sub(1).max(1) as f64;
    let raw: Vec<usize> = match *model {
        DegreeModel::PowerLaw { exponent, x_min } => {
            if !(exponent > 1.0) {
                return Err(Error::DegreeGeneration(format!("power-law exponent {exponent} ≤ 1")));
            }
            let shift = x_min as f64 - 0.5;
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let x = shift * (1.0 - u).powf(-1.0 / (exponent - 1.0)) + 0.5;
                    x.floor().min(cap) as usize
                })
                .collect()
        }
        DegreeModel::Lognormal { log_mean, log_sd } => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (log_mean + log_sd * z).exp().round().min(cap) as usize
            })
            .collect(),
    };
    repair(raw, &[], &mut rng)
}

/// Closed-form limit of `L^k v`: `w_i = γ √d'_i` with
/// `γ = n Σ_j f(d_j) √d'_j / (Σ_j f(d_j) · Σ_j d'_j)`.
pub fn ending_vector(degrees: &DegreeSequence, f: StartFunction, alpha: f64) -> Result<Vec<f64>> {
    degrees.require_positive()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha {alpha} outside (0, 1)")));
    }
    let root: Vec<f64> = degrees
        .as_slice()
        .iter()
        .map(|&d| smoothed_degree(d, alpha).sqrt())
        .collect();
    let weights: Vec<f64> = degrees.as_slice().iter().map(|&d| f.eval(d)).collect();
    let numer: f64 = weights.iter().zip(&root).map(|(w, r)| w * r).sum();
    let total_f: f64 = weights.iter().sum();
    let total_d: f64 = root.iter().map(|r| r * r).sum();
    let gamma = degrees.len() as f64 * numer / (total_f * total_d);
    Ok(root.into_iter().map(|r| gamma * r).collect())
}

/// A one-step reverse predictor together with the trajectory settings it
/// was trained for.
pub trait Predictor: Sync {
    fn functions(&self) -> &[StartFunction];
    fn alpha(&self) -> f64;
    fn k(&self) -> usize;
    /// Estimate of the vector preceding `v`, where `v` sits at index `step`.
    fn predict(&self, v: &[f64], f_index: usize, step: usize) -> Result<Vec<f64>>;
}

impl Predictor for Checkpoint {
    fn functions(&self) -> &[StartFunction] {
        &self.functions
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn k(&self) -> usize {
        self.k
    }

    fn predict(&self, v: &[f64], f_index: usize, step: usize) -> Result<Vec<f64>> {
        Checkpoint::predict(self, v, f_index, step)
    }
}

/// Stacked generated trajectories. Row `r` of `v2` should be the image of
/// row `r` of `v1` under the unknown operator. Rows are grouped by start
/// function; within a group they run over trajectory indices `1..k-1`
/// (`v1`) and `2..k` (`v2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySystem {
    pub degrees: DegreeSequence,
    pub alpha: f64,
    pub k: usize,
    #[serde(rename = "F")]
    pub functions: Vec<StartFunction>,
    #[serde(rename = "V1")]
    pub v1: Vec<Vec<f64>>,
    #[serde(rename = "V2")]
    pub v2: Vec<Vec<f64>>,
}

impl TrajectorySystem {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn rows(&self) -> usize {
        self.v1.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory system serializes")
    }
}

/// Starts every function's trajectory at its ending vector and runs the
/// predictor backwards from index `k` to index 1.
pub fn generate_trajectories<P: Predictor + ?Sized>(
    predictor: &P,
    degrees: &DegreeSequence,
    exec: Execution,
) -> Result<TrajectorySystem> {
    let k = predictor.k();
    let alpha = predictor.alpha();
    let functions = predictor.functions().to_vec();
    if k < 2 {
        return Err(Error::Precondition("generation needs k ≥ 2".into()));
    }
    if !degrees.is_graphical() {
        return Err(Error::Precondition("degree sequence is not graphical".into()));
    }
    let rollouts = par::map_indexed(exec, functions.len(), |fi| -> Result<Vec<Vec<f64>>> {
        let mut rev = Vec::with_capacity(k);
        rev.push(ending_vector(degrees, functions[fi], alpha)?);
        for step in (2..=k).rev() {
            let next = predictor.predict(rev.last().expect("nonempty"), fi, step)?;
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "rollout for beta = {} produced a non-finite vector at step {step}",
                    functions[fi].beta
                )));
            }
            rev.push(next);
        }
        rev.reverse();
        Ok(rev)
    });
    let mut v1 = Vec::with_capacity(functions.len() * (k - 1));
    let mut v2 = Vec::with_capacity(functions.len() * (k - 1));
    for rollout in rollouts {
        let vectors = rollout?;
        v1.extend_from_slice(&vectors[..k - 1]);
        v2.extend_from_slice(&vectors[1..]);
    }
    Ok(TrajectorySystem {
        degrees: degrees.clone(),
        alpha,
        k,
        functions,
        v1,
        v2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::graph::{sample_barabasi_albert, sample_sbm, SbmParams, SmoothedOperator};
    use crate::rwt::{iterate, starting_vector};
    use nalgebra::DMatrix;

    #[test]
    fn zero_flip_keeps_degrees() {
        let g = two_triangles_bridged();
        assert_eq!(perturb_degrees(&g, 0.0, 5).unwrap(), g.degrees());
        assert!(perturb_degrees(&g, 1.5, 5).is_err());
    }

    #[test]
    fn triangle_resamples_to_itself() {
        for seed in 0..20 {
            assert_eq!(perturb_degrees(&triangle(), 1.0, seed).unwrap().into_inner(), vec![2, 2, 2]);
        }
    }

    #[test]
    fn perturbed_sequences_are_graphical() {
        let g = sample_barabasi_albert(60, 2, 1).unwrap();
        for seed in 0..50 {
            let d = perturb_degrees(&g, 0.5, seed).unwrap();
            assert!(d.has_even_sum() && d.is_graphical());
            assert!(d.as_slice().iter().all(|&x| (1..60).contains(&x)));
        }
    }

    #[test]
    fn repair_fixes_non_graphical_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // (3, 3, 1, 1) is not graphical.
        let d = repair(vec![3, 3, 1, 1], &[], &mut rng).unwrap();
        assert!(d.is_graphical());
        let d = repair(vec![9, 9, 9, 9, 1], &[], &mut rng).unwrap();
        assert!(d.is_graphical());
    }

    #[test]
    fn power_law_fit_on_barabasi_albert() {
        let graphs: Vec<Graph> = (0..5).map(|s| sample_barabasi_albert(500, 2, s).unwrap()).collect();
        let model = fit_degree_model(&graphs, DegreeFamily::PowerLaw).unwrap();
        let DegreeModel::PowerLaw { exponent, .. } = model else { panic!() };
        assert!((2.5..=3.5).contains(&exponent), "exponent {exponent}");
        for seed in 0..10 {
            let d = sample_degrees(&model, 200, seed).unwrap();
            assert_eq!(d.len(), 200);
            assert!(d.is_graphical());
        }
    }

    #[test]
    fn power_law_on_constant_degrees_is_rejected() {
        assert!(matches!(
            fit_degree_model(&[cycle(12)], DegreeFamily::PowerLaw),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn lognormal_on_constant_degrees() {
        let model = fit_degree_model(&[cycle(12), cycle(7)], DegreeFamily::Lognormal).unwrap();
        assert_eq!(
            model,
            DegreeModel::Lognormal {
                log_mean: 2f64.ln(),
                log_sd: 0.0
            }
        );
        assert_eq!(sample_degrees(&model, 9, 3).unwrap().into_inner(), vec![2; 9]);
    }

    #[test]
    fn ending_vector_closed_forms() {
        for beta in [1, -1, 2, -2] {
            let w = ending_vector(&cycle(7).degrees(), StartFunction::new(beta), 0.9).unwrap();
            assert!(w.iter().all(|x| (x - 1.0).abs() < 1e-14));
        }
        let d = path3().degrees();
        let w = ending_vector(&d, StartFunction::new(1), 0.9).unwrap();
        let s = 1.1f64.sqrt();
        let gamma = 3.0 * (1.0 + 2.0 * s + 1.0) / (4.0 * 3.1);
        let expect = [gamma, gamma * s, gamma];
        for (a, b) in w.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // Power-iteration oracle.
        let g = path3();
        let op = SmoothedOperator::new(&g, 0.9).unwrap();
        let v = starting_vector(&d, StartFunction::new(1)).unwrap();
        let limit = iterate(&op, v, 2000).pop().unwrap();
        for (a, b) in limit.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ending_vector_shape_is_function_independent() {
        let d = two_triangles_bridged().degrees();
        let base = ending_vector(&d, StartFunction::new(0), 0.5).unwrap();
        for beta in [1, -1, 2, -2] {
            let w = ending_vector(&d, StartFunction::new(beta), 0.5).unwrap();
            let ratio = w[0] / base[0];
            for (a, b) in w.iter().zip(&base) {
                assert!((a / b - ratio).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sbm_limit_clusters_by_block() {
        let params = SbmParams {
            n: 300,
            fractions: vec![0.6, 0.4],
            p_within: 0.08,
            q_across: 0.02,
        };
        let g = sample_sbm(&params, 17).unwrap();
        let op = SmoothedOperator::new(&g, 0.9).unwrap();
        let v = starting_vector(&g.degrees(), StartFunction::new(1)).unwrap();
        let limit = iterate(&op, v, 200).pop().unwrap();
        let split = params.blocks().iter().filter(|&&b| b == 0).count();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let observed = mean(&limit[..split]) / mean(&limit[split..]);
        let kappa1: f64 = 0.6 * 0.08 + 0.4 * 0.02;
        let kappa2 = 0.08 + 0.02 - kappa1;
        let expected = (kappa1 / kappa2).sqrt();
        assert!((observed / expected - 1.0).abs() < 0.1, "{observed} vs {expected}");
    }

    /// Runs the exact inverse of one step on a known graph.
    struct InverseStep {
        inverse: DMatrix<f64>,
        functions: Vec<StartFunction>,
    }

    impl Predictor for InverseStep {
        fn functions(&self) -> &[StartFunction] {
            &self.functions
        }
        fn alpha(&self) -> f64 {
            0.9
        }
        fn k(&self) -> usize {
            10
        }
        fn predict(&self, v: &[f64], _: usize, _: usize) -> Result<Vec<f64>> {
            Ok((&self.inverse * nalgebra::DVector::from_column_slice(v)).iter().copied().collect())
        }
    }

    fn inverse_oracle(g: &Graph) -> InverseStep {
        let op = SmoothedOperator::new(g, 0.9).unwrap();
        let l = DMatrix::from_row_slice(g.n(), g.n(), &op.to_dense());
        InverseStep {
            inverse: l.try_inverse().unwrap(),
            functions: StartFunction::default_set(),
        }
    }

    #[test]
    fn oracle_rollout_satisfies_the_system() {
        let g = two_triangles_bridged();
        let oracle = inverse_oracle(&g);
        let sys = generate_trajectories(&oracle, &g.degrees(), Execution::Sequential).unwrap();
        assert_eq!((sys.v1.len(), sys.v2.len()), (36, 36));
        assert!(sys.v1.iter().all(|r| r.len() == 6));
        let op = SmoothedOperator::new(&g, 0.9).unwrap();
        for (a, b) in sys.v1.iter().zip(&sys.v2) {
            let la = op.apply(a);
            for (x, y) in la.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        // Last row of each group is the ending vector.
        for (fi, f) in sys.functions.iter().enumerate() {
            let w = ending_vector(&sys.degrees, *f, 0.9).unwrap();
            assert_eq!(sys.v2[fi * 9 + 8], w);
        }
        let again = generate_trajectories(&oracle, &g.degrees(), Execution::Parallel).unwrap();
        assert_eq!(sys, again);
        let doc: serde_json::Value = serde_json::from_str(&sys.to_json()).unwrap();
        for key in ["degrees", "alpha", "k", "F", "V1", "V2"] {
            assert!(doc.get(key).is_some());
        }
    }

    struct Exploding;

    impl Predictor for Exploding {
        fn functions(&self) -> &[StartFunction] {
            &[StartFunction { beta: 2 }]
        }
        fn alpha(&self) -> f64 {
            0.9
        }
        fn k(&self) -> usize {
            4
        }
        fn predict(&self, v: &[f64], _: usize, step: usize) -> Result<Vec<f64>> {
            Ok(v.iter().map(|x| if step == 3 { f64::NAN } else { *x }).collect())
        }
    }

    #[test]
    fn non_finite_rollout_names_the_step() {
        let err = generate_trajectories(&Exploding, &triangle().degrees(), Execution::Sequential).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta = 2") && msg.contains("step 3"), "{msg}");
    }
}
