//! Pairwise statistics: unit-capacity max-flow and effective resistance.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Edmonds–Karp on the undirected graph with unit edge capacities. Each
/// edge is a pair of opposite arcs that serve as each other's reverse.
pub fn max_flow(graph: &Graph, s: usize, t: usize) -> usize {
    if s == t {
        return 0;
    }
    let n = graph.n();
    let mut head = Vec::with_capacity(2 * graph.edge_count());
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in graph.edges() {
        out[u].push(head.len());
        head.push(v);
        out[v].push(head.len());
        head.push(u);
    }
    let mut flow = vec![0i32; head.len()];
    let mut total = 0;
    loop {
        let mut via = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &arc in &out[u] {
                let v = head[arc];
                if !seen[v] && flow[arc] < 1 {
                    seen[v] = true;
                    via[v] = arc;
                    queue.push_back(v);
                }
            }
        }
        if !seen[t] {
            return total;
        }
        let mut v = t;
        while v != s {
            let arc = via[v];
            flow[arc] += 1;
            flow[arc ^ 1] -= 1;
            v = head[arc ^ 1];
        }
        total += 1;
    }
}

/// Effective resistances from one Cholesky factorization of the Laplacian
/// with one grounded node per component.
pub struct ResistanceSolver {
    labels: Vec<usize>,
    /// Row of each node in the reduced system, `None` for grounded nodes.
    slot: Vec<Option<usize>>,
    factor: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl ResistanceSolver {
    pub fn new(graph: &Graph) -> Result<Self> {
        let labels = graph.component_labels();
        let n = graph.n();
        let mut grounded = vec![false; labels.iter().max().map_or(0, |m| m + 1)];
        let mut slot = vec![None; n];
        let mut size = 0;
        for v in 0..n {
            if grounded[labels[v]] {
                slot[v] = Some(size);
                size += 1;
            } else {
                grounded[labels[v]] = true;
            }
        }
        let factor = if size == 0 {
            None
        } else {
            let mut lap = DMatrix::zeros(size, size);
            for &(u, v) in graph.edges() {
                if let Some(a) = slot[u] {
                    lap[(a, a)] += 1.0;
                }
                if let Some(b) = slot[v] {
                    lap[(b, b)] += 1.0;
                }
                if let (Some(a), Some(b)) = (slot[u], slot[v]) {
                    lap[(a, b)] -= 1.0;
                    lap[(b, a)] -= 1.0;
                }
            }
            Some(
                Cholesky::new(lap)
                    .ok_or_else(|| Error::NonFinite("grounded Laplacian is not positive definite".into()))?,
            )
        };
        Ok(ResistanceSolver { labels, slot, factor })
    }

    /// `None` when `s` and `t` lie in different components.
    pub fn resistance(&self, s: usize, t: usize) -> Option<f64> {
        if self.labels[s] != self.labels[t] {
            return None;
        }
        if s == t {
            return Some(0.0);
        }
        let factor = self.factor.as_ref().expect("two nodes share a component");
        let mut rhs = DVector::zeros(factor.l_dirty().nrows());
        if let Some(a) = self.slot[s] {
            rhs[a] += 1.0;
        }
        if let Some(b) = self.slot[t] {
            rhs[b] -= 1.0;
        }
        let x = factor.solve(&rhs);
        let potential = |v: usize| self.slot[v].map_or(0.0, |a| x[a]);
        Some(potential(s) - potential(t))
    }
}
