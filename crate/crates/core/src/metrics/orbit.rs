//! Per-node graphlet orbit counts for connected graphlets on 2–4 nodes.

use crate::graph::Graph;

pub const ORBITS: usize = 15;

/// Orbit of each member of a connected induced subgraph, from its edge count
/// and the members' degrees inside it.
fn classify(size: usize, edges: usize, inner: &[usize], out: &mut [usize]) {
    match (size, edges) {
        (2, _) => out[..2].fill(0),
        (3, 2) => {
            for (o, &d) in out.iter_mut().zip(inner) {
                *o = if d == 2 { 2 } else { 1 };
            }
        }
        (3, 3) => out[..3].fill(3),
        (4, 3) => {
            let star = inner.contains(&3);
            for (o, &d) in out.iter_mut().zip(inner) {
                *o = match (star, d) {
                    (true, 3) => 7,
                    (true, _) => 6,
                    (false, 1) => 4,
                    (false, _) => 5,
                };
            }
        }
        (4, 4) => {
            let cycle = inner.iter().all(|&d| d == 2);
            for (o, &d) in out.iter_mut().zip(inner) {
                *o = match (cycle, d) {
                    (true, _) => 8,
                    (false, 1) => 9,
                    (false, 2) => 10,
                    (false, _) => 11,
                };
            }
        }
        (4, 5) => {
            for (o, &d) in out.iter_mut().zip(inner) {
                *o = if d == 2 { 12 } else { 13 };
            }
        }
        (4, 6) => out[..4].fill(14),
        _ => unreachable!("connected subgraph with {size} nodes and {edges} edges"),
    }
}

struct Census<'g> {
    graph: &'g Graph,
    counts: Vec<[u64; ORBITS]>,
}

impl Census<'_> {
    fn record(&mut self, members: &[usize]) {
        let size = members.len();
        let mut inner = [0usize; 4];
        let mut edges = 0;
        for a in 0..size {
            for b in a + 1..size {
                if self.graph.has_edge(members[a], members[b]) {
                    inner[a] += 1;
                    inner[b] += 1;
                    edges += 1;
                }
            }
        }
        let mut orbit = [0usize; 4];
        classify(size, edges, &inner[..size], &mut orbit);
        for (&v, &o) in members.iter().zip(&orbit[..size]) {
            self.counts[v][o] += 1;
        }
    }

    /// ESU enumeration: every connected induced subgraph with smallest node
    /// `root` is visited exactly once.
    fn extend(&mut self, members: &mut Vec<usize>, mut extension: Vec<usize>, root: usize) {
        if members.len() >= 2 {
            self.record(members);
        }
        if members.len() == 4 {
            return;
        }
        while let Some(w) = extension.pop() {
            let mut next = extension.clone();
            for &u in self.graph.neighbors(w) {
                if u > root
                    && !members.contains(&u)
                    && !next.contains(&u)
                    && u != w
                    && !members.iter().any(|&m| self.graph.has_edge(m, u))
                {
                    next.push(u);
                }
            }
            members.push(w);
            self.extend(members, next, root);
            members.pop();
        }
    }
}

/// `counts[v][o]`: how many graphlets touch node `v` in orbit `o`.
pub fn orbit_counts(graph: &Graph) -> Vec<[u64; ORBITS]> {
    let mut census = Census {
        graph,
        counts: vec![[0; ORBITS]; graph.n()],
    };
    for root in 0..graph.n() {
        let extension: Vec<usize> = graph.neighbors(root).iter().copied().filter(|&u| u > root).collect();
        census.extend(&mut vec![root], extension, root);
    }
    census.counts
}
