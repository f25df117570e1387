//! End-to-end steps shared by the CLI and the acceptance suite: training on a
//! corpus, generating graphs from a checkpoint, and diagnostic recovery from
//! true trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DegreeMode, PipelineConfig};
use crate::error::{Error, Result};
use crate::generate::{
    fit_degree_model, generate_trajectories, perturb_degrees, sample_degrees, DegreeModel, TrajectorySystem,
};
use crate::graph::{DegreeSequence, Graph};
use crate::infer::{
    diagnostic_system, random_starts, repair_connectivity, residual_objective, round_weighted, solve_convex,
    solve_exact_with, RoundingResult,
};
use crate::model::{train, Checkpoint, ModelParams, TrainReport};
use crate::par::{self, Execution};
use crate::rwt::{binning_stats, build_training_set};

/// `count` seeds drawn from one stream seeded by `master`.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.random()).collect()
}

/// Builds trajectories for every graph and start function, fits the binning,
/// and trains a fresh model. A non-finite loss is reported through
/// `report.aborted`, with the last finite parameters kept.
pub fn train_corpus(graphs: &[Graph], cfg: &PipelineConfig, exec: Execution) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    let functions = cfg.functions();
    let pairs = build_training_set(graphs, &functions, cfg.alpha, cfg.k, exec)?;
    let stats = binning_stats(&pairs, cfg.c)?;
    let config = cfg.model_config(stats.num_bins())?;
    let params = ModelParams::init(&config)?;
    let opts = crate::model::TrainOptions {
        exec,
        ..cfg.train_options()
    };
    let (params, report) = train(params, &config, &pairs, &stats, &opts)?;
    let checkpoint = Checkpoint {
        config,
        stats,
        functions,
        alpha: cfg.alpha,
        k: cfg.k,
        params,
    };
    checkpoint.validate()?;
    Ok((checkpoint, report))
}

/// Where generated degree sequences come from.
#[derive(Debug, Clone)]
pub enum DegreeSource {
    /// Perturbed copies of the degrees of these graphs, picked uniformly.
    Perturb { graphs: Vec<Graph>, flip_fraction: f64 },
    /// Samples of a fitted model at the sizes of these graphs.
    Fitted { model: DegreeModel, sizes: Vec<usize> },
}

impl DegreeSource {
    pub fn from_corpus(mode: DegreeMode, graphs: Vec<Graph>, flip_fraction: f64) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Precondition("degree source needs at least one graph".into()));
        }
        Ok(match mode.family() {
            None => DegreeSource::Perturb { graphs, flip_fraction },
            Some(family) => DegreeSource::Fitted {
                model: fit_degree_model(&graphs, family)?,
                sizes: graphs.iter().map(Graph::n).collect(),
            },
        })
    }

    pub fn draw(&self, seed: u64) -> Result<DegreeSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            DegreeSource::Perturb { graphs, flip_fraction } => {
                let g = &graphs[rng.random_range(0..graphs.len())];
                perturb_degrees(g, *flip_fraction, rng.random())
            }
            DegreeSource::Fitted { model, sizes } => {
                let n = sizes[rng.random_range(0..sizes.len())];
                sample_degrees(model, n, rng.random())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Convex,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Convex => "convex",
        })
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Solver::Exact),
            "convex" => Ok(Solver::Convex),
            _ => Err(Error::Config(format!("unknown solver {s:?}"))),
        }
    }
}

/// Mean of `|deg_g(i) / d_i − 1|`.
pub fn degree_error(graph: &Graph, target: &DegreeSequence) -> f64 {
    let d = target.as_slice();
    let total: f64 = (0..graph.n())
        .map(|i| (graph.degree(i) as f64 / d[i].max(1) as f64 - 1.0).abs())
        .sum();
    total / graph.n().max(1) as f64
}

/// A solved system.
#[derive(Debug, Clone)]
pub struct Inferred {
    pub graph: Graph,
    pub solver: Solver,
    /// Residual objective of the returned 0/1 graph.
    pub objective: f64,
    pub rounding: Option<RoundingResult>,
    pub converged: Option<bool>,
    /// Exact solver only: whether the search finished within its node budget.
    pub optimal: Option<bool>,
}

/// Solves a system with the chosen solver. The exact search starts from the
/// convex solution when its rounding already meets the degrees.
pub fn infer_graph(sys: &TrajectorySystem, solver: Solver, cfg: &PipelineConfig, seed: u64) -> Result<Inferred> {
    let relaxed = solve_convex(sys, &cfg.solve_options(seed))?;
    let rounded = round_weighted(&relaxed.weights, &sys.degrees)?;
    let inferred = match solver {
        Solver::Exact => {
            let warm = (rounded.graph.degrees() == sys.degrees).then_some(&rounded.graph);
            let exact = solve_exact_with(sys, &cfg.exact_options(), warm)?;
            Inferred {
                objective: residual_objective(&exact.graph, sys)?,
                graph: exact.graph,
                solver,
                rounding: None,
                converged: None,
                optimal: Some(exact.optimal),
            }
        }
        Solver::Convex => Inferred {
            objective: residual_objective(&rounded.graph, sys)?,
            graph: rounded.graph.clone(),
            solver,
            rounding: Some(rounded),
            converged: Some(relaxed.converged),
            optimal: None,
        },
    };
    Ok(inferred)
}

/// Exact when `n ≤ exact_limit`, convex plus rounding otherwise.
pub fn route(n: usize, cfg: &PipelineConfig) -> Solver {
    if n <= cfg.exact_limit {
        Solver::Exact
    } else {
        Solver::Convex
    }
}

/// Manifest entry of one generated graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    pub seed: u64,
    pub n: Option<usize>,
    pub solver: Option<Solver>,
    pub objective: Option<f64>,
    pub degree_error: Option<f64>,
    pub connected: Option<bool>,
    pub repaired: bool,
    pub optimal: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub record: GenerationRecord,
    pub graph: Option<Graph>,
}

/// Degrees, trajectories, inference and optional connectivity repair for
/// one graph.
pub fn generate_one(
    checkpoint: &Checkpoint,
    source: &DegreeSource,
    cfg: &PipelineConfig,
    seed: u64,
    exec: Execution,
) -> Result<(Graph, GenerationRecord)> {
    let seeds = derive_seeds(seed, 3);
    let degrees = source.draw(seeds[0])?;
    let sys = generate_trajectories(checkpoint, &degrees, exec)?;
    let solver = route(sys.n(), cfg);
    let inferred = infer_graph(&sys, solver, cfg, seeds[1])?;
    let mut graph = inferred.graph;
    let mut repaired = false;
    if cfg.ensure_connected && !graph.is_connected() {
        graph = repair_connectivity(&graph, seeds[2]);
        repaired = true;
    }
    let record = GenerationRecord {
        index: 0,
        seed,
        n: Some(graph.n()),
        solver: Some(solver),
        objective: Some(residual_objective(&graph, &sys)?),
        degree_error: Some(degree_error(&graph, &degrees)),
        connected: Some(graph.is_connected()),
        repaired,
        optimal: inferred.optimal,
        error: None,
    };
    Ok((graph, record))
}

/// Generates `count` graphs. A failure is recorded in its manifest entry
/// and never stops the batch.
pub fn generate_batch(
    checkpoint: &Checkpoint,
    source: &DegreeSource,
    count: usize,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Vec<Generated> {
    let seeds = derive_seeds(cfg.seed, count);
    par::map_indexed(exec, count, |i| {
        match generate_one(checkpoint, source, cfg, seeds[i], Execution::Sequential) {
            Ok((graph, record)) => Generated {
                record: GenerationRecord { index: i, ..record },
                graph: Some(graph),
            },
            Err(e) => {
                log::warn!("graph {i} failed: {e}");
                Generated {
                    record: GenerationRecord {
                        index: i,
                        seed: seeds[i],
                        n: None,
                        solver: None,
                        objective: None,
                        degree_error: None,
                        connected: None,
                        repaired: false,
                        optimal: None,
                        error: Some(e.to_string()),
                    },
                    graph: None,
                }
            }
        }
    })
}

/// Outcome of recovering a known graph from its own trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub n_starts: usize,
    pub alpha: f64,
    pub solver: Solver,
    pub seed: u64,
    /// Edges present in exactly one of the truth and the recovered graph.
    pub hamming: usize,
    pub objective_true: f64,
    pub objective_recovered: f64,
    pub degree_error: f64,
    pub rounding: Option<RoundingResult>,
    pub converged: Option<bool>,
    pub optimal: Option<bool>,
}

/// Builds a system from `n_starts` seeded positive start vectors, each
/// contributing the pair `(x, Lx)` under the true operator, and solves it.
pub fn recover(
    graph: &Graph,
    n_starts: usize,
    solver: Solver,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Graph, RecoveryReport)> {
    let seeds = derive_seeds(seed, 2);
    let starts = random_starts(graph.n(), n_starts, seeds[0]);
    let sys = diagnostic_system(graph, &starts, cfg.alpha, 1)?;
    let inferred = infer_graph(&sys, solver, cfg, seeds[1])?;
    let report = RecoveryReport {
        n: graph.n(),
        n_starts,
        alpha: cfg.alpha,
        solver,
        seed,
        hamming: graph.hamming_distance(&inferred.graph),
        objective_true: residual_objective(graph, &sys)?,
        objective_recovered: inferred.objective,
        degree_error: degree_error(&inferred.graph, &graph.degrees()),
        rounding: inferred.rounding,
        converged: inferred.converged,
        optimal: inferred.optimal,
    };
    Ok((inferred.graph, report))
}
