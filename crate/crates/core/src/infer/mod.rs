//! Graph inference from a trajectory system: the L1 residual objective, a
//! convex relaxation, degree-aware rounding, and an exact branch-and-bound
//! solver for small graphs.
//!
//! With `s_i = 1/√d'_i` and `U = V1 · diag(s)`, the residual is
//! `X_rj = s_j (α U_rj + (1−α) Σ_i U_ri A_ij) − V2_rj`, so column `j` of the
//! residual depends only on column `j` of `A`. Both solvers lean on that.

mod convex;
mod exact;
mod repair;
mod round;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generate::TrajectorySystem;
use crate::graph::{smoothed_degree, Graph, SmoothedOperator};

pub use convex::{solve_convex, ConvexMethod, ConvexSolution, SolveOptions, SolveRecord};
pub use exact::{solve_exact, solve_exact_with, ExactOptions, ExactSolution, DEFAULT_EXACT_LIMIT, DEFAULT_NODE_LIMIT};
pub use repair::repair_connectivity;
pub use round::{round_weighted, RoundingResult};

/// Symmetric weights in `[0, 1]` with zero diagonal, stored as the strict
/// upper triangle in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedAdjacency {
    n: usize,
    #[serde(rename = "upper_triangle")]
    upper: Vec<f64>,
}

/// Position of `(i, j)`, `i < j`, in the row-major strict upper triangle.
pub(crate) fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl WeightedAdjacency {
    pub fn new(n: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Precondition(format!(
                "{} upper-triangle entries do not fit n = {n}",
                upper.len()
            )));
        }
        if upper.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Precondition("weights must lie in [0, 1]".into()));
        }
        Ok(WeightedAdjacency { n, upper })
    }

    pub fn from_graph(graph: &Graph) -> Self {
        let n = graph.n();
        let mut upper = vec![0.0; n * n.saturating_sub(1) / 2];
        for &(i, j) in graph.edges() {
            upper[upper_index(n, i, j)] = 1.0;
        }
        WeightedAdjacency { n, upper }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.upper[upper_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[upper_index(self.n, j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        let mut idx = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                a[[i, j]] = self.upper[idx];
                a[[j, i]] = self.upper[idx];
                idx += 1;
            }
        }
        a
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.dense().rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }
}

/// Anything that can be evaluated by [`residual_objective`].
pub trait Adjacency {
    fn size(&self) -> usize;
    fn dense(&self) -> Array2<f64>;
}

impl Adjacency for Graph {
    fn size(&self) -> usize {
        self.n()
    }

    fn dense(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n(), self.n()), self.dense_adjacency()).expect("square")
    }
}

impl Adjacency for WeightedAdjacency {
    fn size(&self) -> usize {
        self.n
    }

    fn dense(&self) -> Array2<f64> {
        WeightedAdjacency::dense(self)
    }
}

/// The system in the form both solvers use.
pub(crate) struct Residual {
    pub n: usize,
    pub alpha: f64,
    /// `1/√d'`.
    pub scale: Vec<f64>,
    /// `V1 · diag(scale)`, rows × n.
    pub u: Array2<f64>,
    pub v2: Array2<f64>,
    pub degrees: Vec<f64>,
}

fn to_matrix(rows: &[Vec<f64>], n: usize, name: &str) -> Result<Array2<f64>> {
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Precondition(format!("{name} rows must have length {n}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{name} has non-finite entries")));
    }
    Ok(Array2::from_shape_vec((rows.len(), n), flat).expect("checked lengths"))
}

impl Residual {
    pub fn new(sys: &TrajectorySystem) -> Result<Self> {
        let n = sys.n();
        if sys.v1.len() != sys.v2.len() || sys.v1.is_empty() {
            return Err(Error::Precondition("V1 and V2 must be nonempty with equal row counts".into()));
        }
        if !(0.0..1.0).contains(&sys.alpha) {
            return Err(Error::Precondition(format!("alpha {} outside [0, 1)", sys.alpha)));
        }
        sys.degrees.require_positive()?;
        let scale: Vec<f64> = sys
            .degrees
            .as_slice()
            .iter()
            .map(|&d| 1.0 / smoothed_degree(d, sys.alpha).sqrt())
            .collect();
        let mut u = to_matrix(&sys.v1, n, "V1")?;
        for mut row in u.rows_mut() {
            row.iter_mut().zip(&scale).for_each(|(x, s)| *x *= s);
        }
        Ok(Residual {
            n,
            alpha: sys.alpha,
            scale,
            u,
            v2: to_matrix(&sys.v2, n, "V2")?,
            degrees: sys.degrees.as_slice().iter().map(|&d| d as f64).collect(),
        })
    }

    /// Residual matrix `X` for a dense symmetric `A`.
    pub fn matrix(&self, a: &Array2<f64>) -> Array2<f64> {
        let ua = self.u.dot(a);
        let mut x = ua * (1.0 - self.alpha) + &self.u * self.alpha;
        for mut row in x.rows_mut() {
            row.iter_mut().zip(&self.scale).for_each(|(x, s)| *x *= s);
        }
        x - &self.v2
    }

    pub fn l1(&self, a: &Array2<f64>) -> f64 {
        self.matrix(a).iter().map(|x| x.abs()).sum()
    }
}

/// `Σ_ij |X_ij|` for `X = V1 D'^{-1/2}((1−α)A + αI)D'^{-1/2} − V2`, where
/// `D'` always comes from the system's degrees, not from `A`.
pub fn residual_objective<A: Adjacency + ?Sized>(a: &A, sys: &TrajectorySystem) -> Result<f64> {
    if a.size() != sys.n() {
        return Err(Error::Precondition(format!(
            "adjacency has {} nodes but the system has {}",
            a.size(),
            sys.n()
        )));
    }
    Ok(Residual::new(sys)?.l1(&a.dense()))
}

/// A system whose rows come from the true operator of `graph`: for every
/// start vector `x`, rows `x, Lx, …, L^{steps-1} x` go to `V1` and their
/// images to `V2`. `alpha` may be 0 here.
pub fn diagnostic_system(
    graph: &Graph,
    starts: &[Vec<f64>],
    alpha: f64,
    steps: usize,
) -> Result<TrajectorySystem> {
    if starts.is_empty() || steps == 0 {
        return Err(Error::Precondition("diagnostic system needs starts and steps".into()));
    }
    let op = SmoothedOperator::diagnostic(graph, alpha)?;
    let mut v1 = Vec::with_capacity(starts.len() * steps);
    let mut v2 = Vec::with_capacity(starts.len() * steps);
    for start in starts {
        if start.len() != graph.n() {
            return Err(Error::Precondition("start vector length differs from n".into()));
        }
        let mut cur = start.clone();
        for _ in 0..steps {
            let next = op.apply(&cur);
            v1.push(std::mem::replace(&mut cur, next.clone()));
            v2.push(next);
        }
    }
    Ok(TrajectorySystem {
        degrees: graph.degrees(),
        alpha,
        k: steps + 1,
        functions: Vec::new(),
        v1,
        v2,
    })
}

/// `count` seeded start vectors with entries uniform in `[0.1, 2)`.
pub fn random_starts(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(0.1..2.0)).collect())
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::fixtures::*;

    pub use super::random_starts;

    #[test]
    fn upper_index_is_row_major() {
        let n = 5;
        let mut expect = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(upper_index(n, i, j), expect);
                expect += 1;
            }
        }
    }

    #[test]
    fn weighted_round_trip_and_dump() {
        let g = two_triangles_bridged();
        let w = WeightedAdjacency::from_graph(&g);
        assert_eq!(w.get(2, 3), 1.0);
        assert_eq!(w.get(3, 2), 1.0);
        assert_eq!(w.get(0, 5), 0.0);
        assert_eq!(w.row_sums(), vec![2.0, 2.0, 3.0, 3.0, 2.0, 2.0]);
        let doc: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(doc["n"], 6);
        assert_eq!(doc["upper_triangle"].as_array().unwrap().len(), 15);
        assert!(WeightedAdjacency::new(3, vec![0.0, 1.5, 0.0]).is_err());
    }

    #[test]
    fn true_graph_has_zero_residual() {
        let g = two_triangles_bridged();
        let sys = diagnostic_system(&g, &random_starts(6, 3, 1), 0.9, 3).unwrap();
        assert!(residual_objective(&g, &sys).unwrap() <= 1e-8);
        let empty = Graph::empty(6);
        assert!(residual_objective(&empty, &sys).unwrap() > 1e-3);
        assert!(residual_objective(&Graph::empty(5), &sys).is_err());
    }

    #[test]
    fn residual_matches_operator() {
        let g = path(5);
        let sys = diagnostic_system(&g, &random_starts(5, 2, 4), 0.5, 1).unwrap();
        let other = cycle(5);
        // Degrees differ, but D' still comes from the system.
        let r = Residual::new(&sys).unwrap();
        let x = r.matrix(&Adjacency::dense(&other));
        let a = Adjacency::dense(&other);
        for (row, (v1, v2)) in sys.v1.iter().zip(&sys.v2).enumerate() {
            for j in 0..5 {
                let mut lv = 0.0;
                for i in 0..5 {
                    let m = 0.5 * a[[i, j]] + if i == j { 0.5 } else { 0.0 };
                    lv += v1[i] * r.scale[i] * m * r.scale[j];
                }
                assert!((x[[row, j]] - (lv - v2[j])).abs() < 1e-12);
            }
        }
    }
}
