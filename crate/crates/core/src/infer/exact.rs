use super::Residual;
use crate::error::{Error, Result};
use crate::generate::TrajectorySystem;
use crate::graph::Graph;

pub const DEFAULT_EXACT_LIMIT: usize = 12;
pub const DEFAULT_NODE_LIMIT: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOptions {
    /// Largest accepted `n`.
    pub n_limit: usize,
    /// Search-tree nodes visited before giving up on an optimality proof.
    pub node_limit: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            n_limit: DEFAULT_EXACT_LIMIT,
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

/// Per-column interval state. Column `j` of the residual is
/// `s_j (base + Σ_{i undecided} c U_ri A_ij) − V2_rj`, and exactly
/// `target_j − degree_j` of the undecided `A_ij` are 1. Per row that sum is
/// therefore bracketed by the sums of the smallest and largest terms of that
/// count; the distance from zero to the bracket lower-bounds every
/// completion.
struct Search<'a> {
    res: &'a Residual,
    rows: usize,
    target: Vec<usize>,
    vars: Vec<(usize, usize)>,
    base: Vec<f64>,
    undecided: Vec<Vec<bool>>,
    col_bound: Vec<f64>,
    degree: Vec<usize>,
    open: Vec<usize>,
    chosen: Vec<bool>,
    best: f64,
    best_edges: Option<Vec<bool>>,
    nodes: u64,
    node_limit: u64,
    exhausted: bool,
    order: Vec<Vec<(usize, f64)>>,
}

impl Search<'_> {
    fn refresh(&mut self, j: usize) {
        let s = self.res.scale[j];
        let need = self.target[j] - self.degree[j];
        let open = self.open[j];
        let mut total = 0.0;
        for r in 0..self.rows {
            let idx = j * self.rows + r;
            let (mut low, mut high) = (0.0, 0.0);
            let mut seen = 0;
            // `order` holds the other nodes' terms in ascending order.
            for &(i, t) in &self.order[idx] {
                if !self.undecided[j][i] {
                    continue;
                }
                if seen < need {
                    low += t;
                }
                if seen >= open - need {
                    high += t;
                }
                seen += 1;
            }
            let v2 = self.res.v2[[r, j]];
            let lo = s * (self.base[idx] + low) - v2;
            let hi = s * (self.base[idx] + high) - v2;
            total += if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            };
        }
        self.col_bound[j] = total;
    }

    fn bound(&self) -> f64 {
        self.col_bound.iter().sum()
    }

    /// Fixes `A_{other,col}` in the state of column `col`.
    fn fix(&mut self, col: usize, other: usize, value: bool) {
        self.undecided[col][other] = false;
        if value {
            let c = 1.0 - self.res.alpha;
            for r in 0..self.rows {
                self.base[col * self.rows + r] += c * self.res.u[[r, other]];
            }
        }
    }

    fn snapshot(&self, i: usize, j: usize) -> [Vec<f64>; 2] {
        let take = |col: usize| self.base[col * self.rows..(col + 1) * self.rows].to_vec();
        [take(i), take(j)]
    }

    fn restore(&mut self, i: usize, j: usize, saved: &[Vec<f64>; 2]) {
        for (col, other, data) in [(i, j, &saved[0]), (j, i, &saved[1])] {
            self.base[col * self.rows..(col + 1) * self.rows].copy_from_slice(data);
            self.undecided[col][other] = true;
        }
        // Degrees and open counts are restored by the caller before this.
        self.refresh(i);
        self.refresh(j);
    }

    fn allowed(&self, i: usize, j: usize, value: bool) -> bool {
        if value {
            self.degree[i] < self.target[i] && self.degree[j] < self.target[j]
        } else {
            self.degree[i] + self.open[i] > self.target[i] && self.degree[j] + self.open[j] > self.target[j]
        }
    }

    fn apply(&mut self, i: usize, j: usize, value: bool) {
        self.open[i] -= 1;
        self.open[j] -= 1;
        if value {
            self.degree[i] += 1;
            self.degree[j] += 1;
        }
        self.fix(j, i, value);
        self.fix(i, j, value);
        self.refresh(i);
        self.refresh(j);
    }

    fn undo(&mut self, i: usize, j: usize, value: bool, saved: &[Vec<f64>; 2]) {
        self.open[i] += 1;
        self.open[j] += 1;
        if value {
            self.degree[i] -= 1;
            self.degree[j] -= 1;
        }
        self.restore(i, j, saved);
    }

    fn prunable(&self, bound: f64) -> bool {
        bound >= self.best - 1e-12 * (1.0 + self.best.abs())
    }

    fn descend(&mut self, depth: usize) {
        if self.nodes >= self.node_limit {
            self.exhausted = true;
            return;
        }
        self.nodes += 1;
        if depth == self.vars.len() {
            let n = self.res.n;
            let mut a = ndarray::Array2::zeros((n, n));
            for (&(i, j), &on) in self.vars.iter().zip(&self.chosen) {
                if on {
                    a[[i, j]] = 1.0;
                    a[[j, i]] = 1.0;
                }
            }
            let objective = self.res.l1(&a);
            if objective < self.best {
                self.best = objective;
                self.best_edges = Some(self.chosen.clone());
            }
            return;
        }
        let (i, j) = self.vars[depth];
        let saved = self.snapshot(i, j);
        let mut children: Vec<(f64, bool)> = Vec::with_capacity(2);
        for value in [false, true] {
            if self.allowed(i, j, value) {
                self.apply(i, j, value);
                children.push((self.bound(), value));
                self.undo(i, j, value, &saved);
            }
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (bound, value) in children {
            if self.prunable(bound) {
                continue;
            }
            self.apply(i, j, value);
            self.chosen[depth] = value;
            self.descend(depth + 1);
            self.undo(i, j, value, &saved);
        }
        self.chosen[depth] = false;
    }
}

/// Havel–Hakimi realization of a graphical sequence.
fn havel_hakimi(degrees: &[usize]) -> Option<Graph> {
    let n = degrees.len();
    let mut left: Vec<(usize, usize)> = degrees.iter().copied().zip(0..n).collect();
    let mut edges = Vec::new();
    loop {
        left.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let (d, v) = left[0];
        if d == 0 {
            break;
        }
        if d >= left.len() {
            return None;
        }
        left[0].0 = 0;
        for entry in &mut left[1..=d] {
            if entry.0 == 0 {
                return None;
            }
            entry.0 -= 1;
            edges.push((v.min(entry.1), v.max(entry.1)));
        }
    }
    edges.sort_unstable();
    Some(Graph::from_canonical(n, edges))
}

/// Result of [`solve_exact`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub graph: Graph,
    pub objective: f64,
    /// Search-tree nodes visited.
    pub nodes: u64,
    /// False when the node budget ran out; the graph is then the best found,
    /// not a proven optimum.
    pub optimal: bool,
}

/// Minimizes the L1 residual over symmetric 0/1 matrices with zero diagonal
/// and row sums equal to the system's degrees, by depth-first branch and
/// bound over the upper triangle in row-major order.
///
/// A branch is cut when some row can no longer reach its degree or has
/// exceeded it, or when the column bounds already match the incumbent.
pub fn solve_exact(sys: &TrajectorySystem, n_limit: usize) -> Result<ExactSolution> {
    solve_exact_with(
        sys,
        &ExactOptions {
            n_limit,
            ..ExactOptions::default()
        },
        None,
    )
}

/// [`solve_exact`] with a node budget and an optional starting incumbent,
/// which must match the system's degrees.
pub fn solve_exact_with(sys: &TrajectorySystem, opts: &ExactOptions, start: Option<&Graph>) -> Result<ExactSolution> {
    let n_limit = opts.n_limit;
    let n = sys.n();
    if n > n_limit {
        return Err(Error::Scope(format!(
            "exact solve is limited to n ≤ {n_limit} (got {n}); use the convex solver"
        )));
    }
    if !sys.degrees.is_graphical() {
        return Err(Error::Infeasible(format!(
            "degree sequence {:?} is not graphical",
            sys.degrees.as_slice()
        )));
    }
    let res = Residual::new(sys)?;
    let rows = res.u.nrows();
    let mut base = vec![0.0; n * rows];
    for j in 0..n {
        for r in 0..rows {
            base[j * rows + r] = res.alpha * res.u[[r, j]];
        }
    }
    let mut order = Vec::with_capacity(n * rows);
    for j in 0..n {
        for r in 0..rows {
            let c = 1.0 - res.alpha;
            let mut others: Vec<(usize, f64)> = (0..n).filter(|&i| i != j).map(|i| (i, c * res.u[[r, i]])).collect();
            others.sort_by(|a, b| a.1.total_cmp(&b.1));
            order.push(others);
        }
    }
    let vars: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut search = Search {
        res: &res,
        rows,
        target: sys.degrees.as_slice().to_vec(),
        chosen: vec![false; vars.len()],
        vars,
        base,
        undecided: (0..n).map(|j| (0..n).map(|i| i != j).collect()).collect(),
        col_bound: vec![0.0; n],
        degree: vec![0; n],
        open: vec![n.saturating_sub(1); n],
        best: f64::INFINITY,
        best_edges: None,
        nodes: 0,
        node_limit: opts.node_limit,
        exhausted: false,
        order,
    };
    let fallback;
    let start = match start {
        Some(g) => g,
        None => {
            fallback = havel_hakimi(sys.degrees.as_slice())
                .ok_or_else(|| Error::Infeasible("degree sequence has no realization".into()))?;
            &fallback
        }
    };
    {
        let g = start;
        if g.n() != n || g.degrees() != sys.degrees {
            return Err(Error::Precondition("starting graph does not match the system's degrees".into()));
        }
        search.best = res.l1(&crate::infer::Adjacency::dense(g));
        search.best_edges = Some(search.vars.iter().map(|&(i, j)| g.has_edge(i, j)).collect());
    }
    for j in 0..n {
        search.refresh(j);
    }
    search.descend(0);
    let Some(edges) = search.best_edges else {
        return Err(Error::Infeasible("no graph meets the degree constraints".into()));
    };
    if search.exhausted {
        log::warn!("exact solve stopped after {} nodes; result is not proven optimal", search.nodes);
    }
    log::debug!("exact solve: {} nodes, objective {:.6e}", search.nodes, search.best);
    let vars = search.vars;
    let graph = Graph::from_indicator(n, |i, j| {
        let idx = super::upper_index(n, i, j);
        debug_assert_eq!(vars[idx], (i, j));
        edges[idx]
    });
    Ok(ExactSolution {
        graph,
        objective: search.best,
        nodes: search.nodes,
        optimal: !search.exhausted,
    })
}
