//! Undirected simple graphs, degree sequences, samplers and the smoothed
//! normalized adjacency operator.

mod io;
mod operator;
mod sample;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_edge_list, load_graph_dir, parse_edge_list, save_edge_list, to_edge_list_string};
pub(crate) use operator::smoothed_degree;
pub use operator::{spectral_check, SmoothedOperator, SpectralSummary};
pub use sample::{
    sample_barabasi_albert, sample_chung_lu, sample_sbm, sample_watts_strogatz, SbmParams,
};

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are kept canonical (`u < v`) and sorted; each node also carries a
/// sorted neighbor list, which is what the matvec hot path walks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, out-of-range endpoints and
    /// repeated pairs (in either orientation).
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Precondition(format!(
                    "edge ({u}, {v}) has an endpoint outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Precondition(format!("self-loop at node {u}")));
            }
            canonical.push((u.min(v), u.max(v)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Precondition(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_canonical(n, canonical))
    }

    /// `edges` must already be canonical, sorted and duplicate-free.
    pub(crate) fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Graph {
            n,
            edges,
            adjacency,
        }
    }

    /// Builds a graph from a boolean upper-triangle indicator.
    pub(crate) fn from_indicator(n: usize, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if keep(u, v) {
                    edges.push((u, v));
                }
            }
        }
        Self::from_canonical(n, edges)
    }

    pub fn empty(n: usize) -> Self {
        Self::from_canonical(n, Vec::new())
    }

    pub fn complete(n: usize) -> Self {
        Self::from_indicator(n, |_, _| true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> DegreeSequence {
        DegreeSequence::new(self.adjacency.iter().map(Vec::len).collect())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Dense 0/1 adjacency, row-major.
    pub fn dense_adjacency(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for &(u, v) in &self.edges {
            a[u * self.n + v] = 1.0;
            a[v * self.n + u] = 1.0;
        }
        a
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Precondition(format!(
                "permutation of length {} for a graph on {} nodes",
                perm.len(),
                self.n
            )));
        }
        Graph::new(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// Component label per node; labels are assigned in order of the lowest
    /// node index in each component.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adjacency[u] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// True iff a traversal from node 0 reaches every node.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = stack.pop() {
            for &w in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    stack.push(w);
                }
            }
        }
        reached == self.n
    }

    /// Number of edge positions where `self` and `other` differ.
    pub fn hamming_distance(&self, other: &Graph) -> usize {
        let (mut i, mut j, mut diff) = (0, 0, 0);
        let (a, b) = (&self.edges, &other.edges);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    diff += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    diff += 1;
                    j += 1;
                }
            }
        }
        diff + (a.len() - i) + (b.len() - j)
    }
}

/// Degree per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DegreeSequence(Vec<usize>);

impl DegreeSequence {
    pub fn new(degrees: Vec<usize>) -> Self {
        DegreeSequence(degrees)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn has_even_sum(&self) -> bool {
        self.sum().is_multiple_of(2)
    }

    /// Errors unless every entry is at least one.
    pub fn require_positive(&self) -> Result<()> {
        match self.0.iter().position(|&d| d == 0) {
            Some(i) => Err(Error::Precondition(format!("node {i} has degree 0"))),
            None => Ok(()),
        }
    }

    /// Erdős–Gallai test.
    pub fn is_graphical(&self) -> bool {
        let n = self.0.len();
        if !self.has_even_sum() || self.0.iter().any(|&d| d >= n) {
            return false;
        }
        let mut sorted = self.0.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut prefix = 0usize;
        for k in 1..=n {
            prefix += sorted[k - 1];
            let tail: usize = sorted[k..].iter().map(|&d| d.min(k)).sum();
            if prefix > k * (k - 1) + tail {
                return false;
            }
        }
        true
    }
}

impl From<Vec<usize>> for DegreeSequence {
    fn from(v: Vec<usize>) -> Self {
        DegreeSequence(v)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn rejects_invalid_edges() {
        assert!(Graph::new(2, [(0, 0)]).is_err());
        assert!(Graph::new(2, [(0, 2)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn degrees_and_adjacency() {
        let g = path3();
        assert_eq!(g.degrees().as_slice(), &[1, 2, 1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(0, 2));
        assert_eq!(triangle().degrees().as_slice(), &[2, 2, 2]);
    }

    #[test]
    fn connectivity() {
        assert!(triangle().is_connected());
        assert!(path3().is_connected());
        let two_edges = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!two_edges.is_connected());
        assert_eq!(two_edges.component_labels(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn graphicality() {
        assert!(DegreeSequence::new(vec![2, 2, 2]).is_graphical());
        assert!(DegreeSequence::new(vec![1, 2, 1]).is_graphical());
        assert!(!DegreeSequence::new(vec![1, 1, 1]).is_graphical());
        assert!(!DegreeSequence::new(vec![3, 3, 1, 1]).is_graphical());
        assert!(DegreeSequence::new(vec![3, 1, 1, 1]).is_graphical());
        assert!(!DegreeSequence::new(vec![3, 1, 1]).is_graphical());
    }

    #[test]
    fn hamming_and_permutation() {
        let g = path3();
        let t = triangle();
        assert_eq!(g.hamming_distance(&t), 1);
        assert_eq!(g.hamming_distance(&g), 0);
        let p = g.permute(&[1, 0, 2]).unwrap();
        assert_eq!(p.degrees().as_slice(), &[2, 1, 1]);
    }
}
