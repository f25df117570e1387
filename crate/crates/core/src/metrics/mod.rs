//! Graph statistics, the one-dimensional Wasserstein distance, and the
//! set-level relative error used to compare generated and test graphs.

mod flow;
mod orbit;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_graph_dir, Graph};
use crate::par::{self, Execution};

pub use flow::{max_flow, ResistanceSolver};
pub use orbit::{orbit_counts, ORBITS};

/// Random partitions and node pairs drawn per graph.
pub const SAMPLES: usize = 100;
const PAGERANK_DAMPING: f64 = 0.85;
const PAGERANK_TOL: f64 = 1e-10;
const PAIR_STREAM: u64 = 0x005e_ed0f_9a12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Degree,
    Pagerank,
    Cut,
    Conductance,
    Modularity,
    Clustering,
    Orbit,
    Maxflow,
    Resistance,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Degree,
        Metric::Pagerank,
        Metric::Cut,
        Metric::Conductance,
        Metric::Modularity,
        Metric::Clustering,
        Metric::Orbit,
        Metric::Maxflow,
        Metric::Resistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Degree => "degree",
            Metric::Pagerank => "pagerank",
            Metric::Cut => "cut",
            Metric::Conductance => "conductance",
            Metric::Modularity => "modularity",
            Metric::Clustering => "clustering",
            Metric::Orbit => "orbit",
            Metric::Maxflow => "maxflow",
            Metric::Resistance => "resistance",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticVector {
    pub metric: Metric,
    pub values: Vec<f64>,
    pub seed: u64,
    /// Pairs left out because their endpoints are disconnected.
    pub excluded: usize,
}

/// Uniform random bipartitions (`true` = side S) with both sides nonempty,
/// drawn from one seeded stream. `accept` can reject further partitions; the
/// stream then moves on to the next draw.
fn partitions(n: usize, seed: u64, accept: impl Fn(&[bool]) -> bool) -> Result<Vec<Vec<bool>>> {
    if n < 2 {
        return Err(Error::Undefined("partitions need at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(SAMPLES);
    let mut draws = 0;
    while out.len() < SAMPLES {
        draws += 1;
        if draws > 1000 * SAMPLES {
            return Err(Error::Undefined("could not draw non-degenerate partitions".into()));
        }
        let side: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let size = side.iter().filter(|&&s| s).count();
        if size == 0 || size == n || !accept(&side) {
            continue;
        }
        out.push(side);
    }
    Ok(out)
}

/// Uniform ordered pairs `(s, t)` with `s ≠ t`.
fn pairs(n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::Undefined("node pairs need at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PAIR_STREAM);
    let mut out = Vec::with_capacity(SAMPLES);
    while out.len() < SAMPLES {
        let s = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if s != t {
            out.push((s, t));
        }
    }
    Ok(out)
}

fn cut_size(graph: &Graph, side: &[bool]) -> usize {
    graph.edges().iter().filter(|&&(u, v)| side[u] != side[v]).count()
}

fn volumes(graph: &Graph, side: &[bool]) -> (usize, usize) {
    let inside: usize = (0..graph.n()).filter(|&v| side[v]).map(|v| graph.degree(v)).sum();
    (inside, 2 * graph.edge_count() - inside)
}

pub fn pagerank(graph: &Graph) -> Vec<f64> {
    let n = graph.n();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let dangling: f64 = (0..n).filter(|&v| graph.degree(v) == 0).map(|v| x[v]).sum();
        let base = (1.0 - PAGERANK_DAMPING) / n as f64 + PAGERANK_DAMPING * dangling / n as f64;
        let next: Vec<f64> = (0..n)
            .map(|v| {
                base + PAGERANK_DAMPING
                    * graph
                        .neighbors(v)
                        .iter()
                        .map(|&u| x[u] / graph.degree(u) as f64)
                        .sum::<f64>()
            })
            .collect();
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if change < PAGERANK_TOL {
            break;
        }
    }
    x
}

pub fn clustering(graph: &Graph) -> Vec<f64> {
    (0..graph.n())
        .map(|v| {
            let nb = graph.neighbors(v);
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let mut links = 0;
            for (a, &x) in nb.iter().enumerate() {
                for &y in &nb[a + 1..] {
                    if graph.has_edge(x, y) {
                        links += 1;
                    }
                }
            }
            links as f64 / (d * (d - 1) / 2) as f64
        })
        .collect()
}

/// Two-block Newman modularity `Σ_c (e_c/m − (vol_c/2m)²)`.
pub fn modularity(graph: &Graph, side: &[bool]) -> Result<f64> {
    let m = graph.edge_count() as f64;
    if m == 0.0 {
        return Err(Error::Undefined("modularity of an edgeless graph".into()));
    }
    let inside = graph.edges().iter().filter(|&&(u, v)| side[u] && side[v]).count() as f64;
    let outside = graph.edges().iter().filter(|&&(u, v)| !side[u] && !side[v]).count() as f64;
    let (vol_in, vol_out) = volumes(graph, side);
    let q = |e: f64, vol: usize| e / m - (vol as f64 / (2.0 * m)).powi(2);
    Ok(q(inside, vol_in) + q(outside, vol_out))
}

/// One statistic of one graph. Partition and pair samples depend only on
/// `seed` and `n`, so graphs of equal size are probed identically.
pub fn statistic(graph: &Graph, metric: Metric, seed: u64) -> Result<StatisticVector> {
    let n = graph.n();
    if n == 0 {
        return Err(Error::Precondition("statistic of an empty graph".into()));
    }
    let mut excluded = 0;
    let values: Vec<f64> = match metric {
        Metric::Degree => graph.degrees().as_slice().iter().map(|&d| d as f64).collect(),
        Metric::Pagerank => pagerank(graph),
        Metric::Clustering => clustering(graph),
        Metric::Cut => partitions(n, seed, |_| true)?
            .iter()
            .map(|s| cut_size(graph, s) as f64)
            .collect(),
        Metric::Conductance => partitions(n, seed, |s| {
            let (a, b) = volumes(graph, s);
            a > 0 && b > 0
        })?
        .iter()
        .map(|s| {
            let (a, b) = volumes(graph, s);
            cut_size(graph, s) as f64 / a.min(b) as f64
        })
        .collect(),
        Metric::Modularity => partitions(n, seed, |_| true)?
            .iter()
            .map(|s| modularity(graph, s))
            .collect::<Result<_>>()?,
        Metric::Orbit => orbit_counts(graph)
            .iter()
            .flat_map(|c| c.iter().map(|&x| x as f64))
            .collect(),
        Metric::Maxflow => pairs(n, seed)?
            .into_iter()
            .map(|(s, t)| max_flow(graph, s, t) as f64)
            .collect(),
        Metric::Resistance => {
            let solver = ResistanceSolver::new(graph)?;
            let mut out = Vec::with_capacity(SAMPLES);
            for (s, t) in pairs(n, seed)? {
                match solver.resistance(s, t) {
                    Some(r) => out.push(r),
                    None => excluded += 1,
                }
            }
            out
        }
    };
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{metric} statistic")));
    }
    Ok(StatisticVector {
        metric,
        values,
        seed,
        excluded,
    })
}

/// W1 between two sorted samples: the integral of the absolute difference
/// of their quantile functions.
fn wasserstein_sorted(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == y.len() {
        return x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64;
    }
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut pos = 0.0;
    let mut total = 0.0;
    while i < x.len() && j < y.len() {
        let next_x = (i + 1) as f64 / nx;
        let next_y = (j + 1) as f64 / ny;
        let next = next_x.min(next_y);
        total += (next - pos) * (x[i] - y[j]).abs();
        pos = next;
        if next_x <= next {
            i += 1;
        }
        if next_y <= next {
            j += 1;
        }
    }
    total
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn wasserstein1(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Precondition("W1 of an empty sample".into()));
    }
    Ok(wasserstein_sorted(&sorted(x), &sorted(y)))
}

fn relative_error_from(gen: &[Vec<f64>], test: &[Vec<f64>], metric: Metric) -> Result<f64> {
    if gen.is_empty() || test.is_empty() {
        return Err(Error::Precondition("relative error needs nonempty sets".into()));
    }
    if gen.iter().chain(test).any(Vec::is_empty) {
        return Err(Error::Undefined(format!("a graph has an empty {metric} statistic")));
    }
    let cross: f64 = gen
        .iter()
        .flat_map(|a| test.iter().map(move |b| wasserstein_sorted(a, b)))
        .sum();
    let within: f64 = test
        .iter()
        .flat_map(|a| test.iter().map(move |b| wasserstein_sorted(a, b)))
        .sum();
    if within == 0.0 {
        return Err(Error::Undefined(format!(
            "all test graphs have identical {metric} statistics"
        )));
    }
    Ok((cross / within * test.len() as f64 / gen.len() as f64 - 1.0).abs())
}

fn sorted_statistics(
    graphs: &[Graph],
    metric: Metric,
    seed: u64,
    exec: Execution,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let stats = par::map_slice(exec, graphs, |g| statistic(g, metric, seed));
    let mut out = Vec::with_capacity(graphs.len());
    let mut excluded = 0;
    for s in stats {
        let s = s?;
        excluded += s.excluded;
        out.push(sorted(&s.values));
    }
    Ok((out, excluded))
}

/// `| (Σ_{gen×test} W1 / Σ_{test×test} W1) · |test|/|gen| − 1 |`, both sums
/// over all ordered pairs including the diagonal.
pub fn relative_error(gen: &[Graph], test: &[Graph], metric: Metric, seed: u64, exec: Execution) -> Result<f64> {
    if test.len() < 2 {
        return Err(Error::Precondition("relative error needs at least two test graphs".into()));
    }
    let (g, _) = sorted_statistics(gen, metric, seed, exec)?;
    let (t, _) = sorted_statistics(test, metric, seed, exec)?;
    relative_error_from(&g, &t, metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub count: usize,
    pub connected_fraction: f64,
}

impl SetSummary {
    pub fn of(graphs: &[Graph]) -> Self {
        let connected = graphs.iter().filter(|g| g.is_connected()).count();
        SetSummary {
            count: graphs.len(),
            connected_fraction: connected as f64 / graphs.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Relative error per metric; `null` when the metric is undefined for
    /// this comparison.
    pub metrics: BTreeMap<Metric, Option<f64>>,
    pub gen: SetSummary,
    pub test: SetSummary,
    pub seed: u64,
    /// Disconnected pairs left out of the resistance statistic, summed over
    /// both sets.
    pub excluded_pairs: BTreeMap<Metric, usize>,
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metric,relative_error` rows; undefined metrics have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,relative_error\n");
        for (m, e) in &self.metrics {
            match e {
                Some(e) => out.push_str(&format!("{m},{e}\n")),
                None => out.push_str(&format!("{m},\n")),
            }
        }
        out
    }
}

/// Scores a generated set against a test set on every requested metric.
/// Metrics that are undefined for the sets are reported as `null` with a
/// warning; other errors are returned.
pub fn error_report(
    gen: &[Graph],
    test: &[Graph],
    metrics: &[Metric],
    seed: u64,
    exec: Execution,
) -> Result<ErrorReport> {
    if gen.is_empty() || test.is_empty() {
        return Err(Error::Precondition("both graph sets must be nonempty".into()));
    }
    if test.len() < 2 {
        return Err(Error::Precondition("relative error needs at least two test graphs".into()));
    }
    let mut errors = BTreeMap::new();
    let mut excluded_pairs = BTreeMap::new();
    for &metric in metrics {
        let outcome = sorted_statistics(gen, metric, seed, exec).and_then(|(g, ex_g)| {
            let (t, ex_t) = sorted_statistics(test, metric, seed, exec)?;
            Ok((relative_error_from(&g, &t, metric)?, ex_g + ex_t))
        });
        match outcome {
            Ok((e, excluded)) => {
                errors.insert(metric, Some(e));
                excluded_pairs.insert(metric, excluded);
            }
            Err(Error::Undefined(msg)) => {
                log::warn!("{metric}: {msg}");
                errors.insert(metric, None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ErrorReport {
        metrics: errors,
        gen: SetSummary::of(gen),
        test: SetSummary::of(test),
        seed,
        excluded_pairs,
    })
}

/// [`error_report`] over two directories of edge-list files.
pub fn error_report_dirs(
    gen_dir: &Path,
    test_dir: &Path,
    metrics: &[Metric],
    seed: u64,
    exec: Execution,
) -> Result<ErrorReport> {
    let load = |dir: &Path| -> Result<Vec<Graph>> {
        let graphs: Vec<Graph> = load_graph_dir(dir)?.into_iter().map(|(_, g)| g).collect();
        if graphs.is_empty() {
            return Err(Error::Precondition(format!("no graphs in {}", dir.display())));
        }
        Ok(graphs)
    };
    error_report(&load(gen_dir)?, &load(test_dir)?, metrics, seed, exec)
}
