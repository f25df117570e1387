use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;

fn build(n: usize, edges: &[(usize, usize)]) -> Graph {
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    Graph::from_canonical(n, sorted)
}

/// Tries to connect `graph` with degree-preserving double-edge swaps: take
/// an edge `(a, b)` in one component and `(c, d)` in another and rewire them
/// to `(a, c)`, `(b, d)`. Gives up after `10 n` attempts and returns the
/// input unchanged.
pub fn repair_connectivity(graph: &Graph, seed: u64) -> Graph {
    if graph.n() == 0 || graph.is_connected() {
        return graph.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = graph.edges().to_vec();
    let n = graph.n();
    for _ in 0..10 * n {
        let current = build(n, &edges);
        let labels = current.component_labels();
        let components = labels.iter().max().map_or(0, |m| m + 1);
        if components <= 1 {
            log::debug!("connectivity repaired");
            return current;
        }
        let mut by_component: Vec<Vec<usize>> = vec![Vec::new(); components];
        for (idx, &(u, _)) in edges.iter().enumerate() {
            by_component[labels[u]].push(idx);
        }
        let with_edges: Vec<usize> = (0..components).filter(|&c| !by_component[c].is_empty()).collect();
        if with_edges.len() < 2 {
            break;
        }
        let x = *with_edges.choose(&mut rng).expect("nonempty");
        let y = loop {
            let y = *with_edges.choose(&mut rng).expect("nonempty");
            if y != x {
                break y;
            }
        };
        let e1 = *by_component[x].choose(&mut rng).expect("nonempty");
        let e2 = *by_component[y].choose(&mut rng).expect("nonempty");
        let (a, b) = edges[e1];
        let (mut c, mut d) = edges[e2];
        if rng.random_bool(0.5) {
            std::mem::swap(&mut c, &mut d);
        }
        // Endpoints lie in different components, so the new edges are absent.
        edges[e1] = (a.min(c), a.max(c));
        edges[e2] = (b.min(d), b.max(d));
    }
    let last = build(n, &edges);
    if last.is_connected() {
        return last;
    }
    log::warn!("connectivity repair failed after {} attempts; keeping the original graph", 10 * n);
    graph.clone()
}
