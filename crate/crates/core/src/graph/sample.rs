//! Random graph families used as training corpora and test fixtures.
//!
//! Every sampler owns a `ChaCha8Rng` seeded from its `seed` argument, so the
//! output is a pure function of the parameters and the seed.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DegreeSequence, Graph};
use crate::error::{Error, Result};

/// Stochastic block model parameters. Communities are contiguous index
/// ranges sized by `fractions`; rounding residue goes to the last block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub fractions: Vec<f64>,
    pub p_within: f64,
    pub q_across: f64,
}

impl SbmParams {
    /// Block label per node.
    pub fn blocks(&self) -> Vec<usize> {
        let mut labels = Vec::with_capacity(self.n);
        let last = self.fractions.len() - 1;
        for (b, frac) in self.fractions.iter().enumerate() {
            let size = if b == last {
                self.n - labels.len()
            } else {
                ((frac * self.n as f64) + 1e-9).floor() as usize
            };
            let size = size.min(self.n - labels.len());
            labels.extend(std::iter::repeat_n(b, size));
        }
        labels
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        if self.n == 0 {
            return bad("SBM needs at least one node".into());
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| !(f > 0.0)) {
            return bad("community fractions must be positive".into());
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("community fractions sum to {total}, not 1"));
        }
        for (name, p) in [("p", self.p_within), ("q", self.q_across)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

pub fn sample_sbm(params: &SbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let blocks = params.blocks();
    let prob = |u: usize, v: usize| {
        if blocks[u] == blocks[v] {
            params.p_within
        } else {
            params.q_across
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    independent_pairs(params.n, prob, &mut rng, "SBM")
}

/// Links each pair independently with `prob(u, v)`, then retries the pairs of
/// every isolated node once before giving up.
fn independent_pairs(
    n: usize,
    prob: impl Fn(usize, usize) -> f64,
    rng: &mut ChaCha8Rng,
    family: &str,
) -> Result<Graph> {
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < prob(u, v) {
                adjacency[u].insert(v);
                adjacency[v].insert(u);
            }
        }
    }
    for u in 0..n {
        if !adjacency[u].is_empty() {
            continue;
        }
        for v in (0..n).filter(|&v| v != u) {
            if rng.random::<f64>() < prob(u.min(v), u.max(v)) {
                adjacency[u].insert(v);
                adjacency[v].insert(u);
            }
        }
        if adjacency[u].is_empty() {
            return Err(Error::Sampler(format!(
                "{family} sample left node {u} isolated after one retry"
            )));
        }
    }
    Ok(from_sets(n, &adjacency))
}

fn from_sets(n: usize, adjacency: &[BTreeSet<usize>]) -> Graph {
    let edges = (0..n)
        .flat_map(|u| adjacency[u].range(u + 1..).map(move |&v| (u, v)))
        .collect();
    Graph::from_canonical(n, edges)
}

/// Ring lattice where every node links to `ring_neighbors / 2` successors,
/// followed by rewiring of each clockwise edge with probability `rewire_prob`.
pub fn sample_watts_strogatz(
    n: usize,
    ring_neighbors: usize,
    rewire_prob: f64,
    seed: u64,
) -> Result<Graph> {
    if ring_neighbors == 0 || !ring_neighbors.is_multiple_of(2) || ring_neighbors >= n {
        return Err(Error::Precondition(format!(
            "ring_neighbors must be even, positive and below n = {n}; got {ring_neighbors}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(Error::Precondition(format!(
            "rewire probability {rewire_prob} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = ring_neighbors / 2;
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for offset in 1..=half {
        for u in 0..n {
            let v = (u + offset) % n;
            adjacency[u].insert(v);
            adjacency[v].insert(u);
        }
    }
    for offset in 1..=half {
        for u in 0..n {
            let v = (u + offset) % n;
            if rng.random::<f64>() >= rewire_prob {
                continue;
            }
            if adjacency[u].len() >= n - 1 || !adjacency[u].contains(&v) {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !adjacency[u].contains(&w) {
                    break w;
                }
            };
            adjacency[u].remove(&v);
            adjacency[v].remove(&u);
            adjacency[u].insert(w);
            adjacency[w].insert(u);
        }
    }
    Ok(from_sets(n, &adjacency))
}

/// Preferential attachment grown from a clique on `edges_per_new_node + 1`
/// nodes. Each new node links to `edges_per_new_node` distinct existing nodes
/// chosen with probability proportional to degree.
pub fn sample_barabasi_albert(n: usize, edges_per_new_node: usize, seed: u64) -> Result<Graph> {
    let m = edges_per_new_node;
    if m == 0 || m >= n {
        return Err(Error::Precondition(format!(
            "edges_per_new_node must satisfy 1 <= m < n; got m = {m}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_size = m + 1;
    let mut edges = Vec::new();
    // Every edge endpoint once, so a uniform draw is degree-proportional.
    let mut endpoints = Vec::new();
    for u in 0..seed_size {
        for v in (u + 1)..seed_size {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for new in seed_size..n {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, new));
            endpoints.extend([t, new]);
        }
    }
    Graph::new(n, edges)
}

/// Expected-degree random graph: pair `(i, j)` is linked with probability
/// `min(1, d_i d_j / Σd)`.
pub fn sample_chung_lu(target: &DegreeSequence, seed: u64) -> Result<Graph> {
    let d: Vec<f64> = target.as_slice().iter().map(|&x| x as f64).collect();
    let total: f64 = d.iter().sum();
    if total <= 0.0 {
        return Err(Error::Precondition("target degrees sum to zero".into()));
    }
    let max = d.iter().cloned().fold(0.0, f64::max);
    if max * max / total > 1.0 {
        log::warn!("Chung-Lu probabilities exceed 1 for some pairs and are clipped");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    independent_pairs(
        d.len(),
        |u, v| (d[u] * d[v] / total).min(1.0),
        &mut rng,
        "Chung-Lu",
    )
}
