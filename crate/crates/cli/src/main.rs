use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use graphweave::config::{DegreeMode, PipelineConfig};
use graphweave::graph::{
    load_edge_list, load_graph_dir, sample_barabasi_albert, sample_chung_lu, sample_sbm, sample_watts_strogatz,
    save_edge_list, DegreeSequence, Graph, SbmParams,
};
use graphweave::metrics::{error_report, statistic, Metric};
use graphweave::model::Checkpoint;
use graphweave::par::{with_workers, Execution};
use graphweave::pipeline::{derive_seeds, generate_batch, recover, train_corpus, DegreeSource, Solver};
use graphweave::{Error, ErrorKind};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "graphweave", version, about = "Graph generation from reversed random-walk trajectories")]
struct Cli {
    /// Master seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Config override, repeatable: `--set alpha=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a corpus of random graphs.
    Sample(SampleArgs),
    /// Train a reverse model on a directory of edge lists.
    Train {
        corpus: PathBuf,
        /// Checkpoint path (default: <out>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate graphs from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 40)]
        count: usize,
        /// `perturb:<dir>`, `powerlaw:<dir>` or `lognormal:<dir>`.
        #[arg(long)]
        degree_source: String,
    },
    /// Score a generated set against a test set.
    Eval {
        gen: PathBuf,
        test: PathBuf,
        /// Comma-separated subset of metrics (default: all).
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<Metric>,
    },
    /// Recover a known graph from its own trajectories.
    Recover {
        graph: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_starts: usize,
        #[arg(long, default_value = "exact")]
        solver: Solver,
    },
    /// Dump per-graph statistics of an edge list or a directory of them.
    Stats {
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<Metric>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Sbm,
    Ws,
    Ba,
    Chunglu,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 40)]
    n: usize,
    /// SBM block fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.3,0.2")]
    fractions: Vec<f64>,
    /// SBM within-block probability.
    #[arg(long, default_value_t = 0.8)]
    p: f64,
    /// SBM across-block probability.
    #[arg(long, default_value_t = 0.3)]
    q: f64,
    /// Watts-Strogatz ring degree.
    #[arg(long, default_value_t = 4)]
    ring_neighbors: usize,
    /// Watts-Strogatz rewiring probability.
    #[arg(long, default_value_t = 0.1)]
    rewire: f64,
    /// Barabási-Albert edges per new node.
    #[arg(long, default_value_t = 2)]
    attach: usize,
    /// Chung-Lu expected degrees, one per node.
    #[arg(long, value_delimiter = ',')]
    degrees: Vec<usize>,
}

/// Error raised by argument handling after clap has accepted the command line.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let workers = cli.workers;
    match with_workers(workers, || run(cli)) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match (e, e.kind()) {
                (Error::Config(_), _) => EXIT_USAGE,
                (_, ErrorKind::Numerical) => EXIT_NUMERICAL,
                (_, ErrorKind::Data) => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn resolve_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut overrides = Vec::with_capacity(cli.overrides.len() + 1);
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    Ok(PipelineConfig::resolve(cli.config.as_deref(), &overrides)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = resolve_config(&cli)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Sample(args) => cmd_sample(args, &cfg, out),
        Command::Train { corpus, checkpoint } => {
            let path = checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.json"));
            cmd_train(corpus, &path, &cfg, out)
        }
        Command::Generate {
            checkpoint,
            count,
            degree_source,
        } => cmd_generate(checkpoint, *count, degree_source, cfg, out),
        Command::Eval { gen, test, metrics } => cmd_eval(gen, test, metrics, &cfg, out),
        Command::Recover { graph, n_starts, solver } => cmd_recover(graph, *n_starts, *solver, &cfg, out),
        Command::Stats { input, metrics } => cmd_stats(input, metrics, &cfg, out),
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn graph_name(index: usize) -> String {
    format!("graph_{index:04}.txt")
}

fn load_corpus(dir: &Path) -> anyhow::Result<Vec<Graph>> {
    let graphs: Vec<Graph> = load_graph_dir(dir)?.into_iter().map(|(_, g)| g).collect();
    if graphs.is_empty() {
        return Err(Error::Precondition(format!("no graphs in {}", dir.display())).into());
    }
    Ok(graphs)
}

fn metric_list(metrics: &[Metric]) -> Vec<Metric> {
    if metrics.is_empty() {
        Metric::ALL.to_vec()
    } else {
        let mut list = metrics.to_vec();
        list.sort();
        list.dedup();
        list
    }
}

fn cmd_sample(args: &SampleArgs, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<ExitCode> {
    if matches!(args.family, Family::Chunglu) && args.degrees.is_empty() {
        return Err(usage("chunglu needs --degrees"));
    }
    let seeds = derive_seeds(cfg.seed, args.count);
    let mut files = Vec::with_capacity(args.count);
    for (index, &seed) in seeds.iter().enumerate() {
        let graph = match args.family {
            Family::Sbm => sample_sbm(
                &SbmParams {
                    n: args.n,
                    fractions: args.fractions.clone(),
                    p_within: args.p,
                    q_across: args.q,
                },
                seed,
            ),
            Family::Ws => sample_watts_strogatz(args.n, args.ring_neighbors, args.rewire, seed),
            Family::Ba => sample_barabasi_albert(args.n, args.attach, seed),
            Family::Chunglu => sample_chung_lu(&DegreeSequence::new(args.degrees.clone()), seed),
        }?;
        let name = graph_name(index);
        save_edge_list(&graph, out.join(&name))?;
        files.push(json!({ "file": name, "seed": seed, "n": graph.n(), "edges": graph.edge_count() }));
    }
    write_json(
        &out.join("manifest.json"),
        &json!({ "command": "sample", "params": args, "config": cfg, "graphs": files }),
    )?;
    log::info!("sampled {} {:?} graphs into {}", args.count, args.family, out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(corpus: &Path, checkpoint: &Path, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let graphs = load_corpus(corpus)?;
    let (ckpt, report) = train_corpus(&graphs, cfg, Execution::Parallel)?;
    ckpt.save(checkpoint)?;
    write(&out.join("loss.csv"), &report.loss_csv())?;
    write_json(
        &out.join("train_report.json"),
        &json!({
            "command": "train",
            "corpus": corpus,
            "graphs": graphs.len(),
            "checkpoint": checkpoint,
            "config": cfg,
            "report": report,
        }),
    )?;
    if let Some(reason) = &report.aborted {
        eprintln!("error: training aborted: {reason}");
        return Ok(ExitCode::from(EXIT_NUMERICAL));
    }
    log::info!(
        "trained on {} graphs: held-out MSE {:.4e} -> {:.4e}",
        graphs.len(),
        report.initial_heldout(),
        report.final_heldout()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_degree_source(spec: &str) -> anyhow::Result<(DegreeMode, PathBuf)> {
    let (mode, dir) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("--degree-source expects MODE:DIR, got {spec:?}")))?;
    let mode: DegreeMode = mode.parse().map_err(|e: Error| usage(e.to_string()))?;
    Ok((mode, PathBuf::from(dir)))
}

fn cmd_generate(
    checkpoint: &Path,
    count: usize,
    degree_source: &str,
    mut cfg: PipelineConfig,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let (mode, dir) = parse_degree_source(degree_source)?;
    cfg.degree_source = mode;
    let ckpt = Checkpoint::load(checkpoint)?;
    let source = DegreeSource::from_corpus(mode, load_corpus(&dir)?, cfg.flip_fraction)?;
    let batch = generate_batch(&ckpt, &source, count, &cfg, Execution::Parallel);
    let mut records = Vec::with_capacity(batch.len());
    let mut failed = 0;
    for item in &batch {
        let file = match &item.graph {
            Some(g) => {
                let name = graph_name(item.record.index);
                save_edge_list(g, out.join(&name))?;
                Some(name)
            }
            None => {
                failed += 1;
                log::warn!(
                    "graph {} failed: {}",
                    item.record.index,
                    item.record.error.as_deref().unwrap_or("unknown error")
                );
                None
            }
        };
        records.push(json!({ "file": file, "record": item.record }));
    }
    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "generate",
            "checkpoint": checkpoint,
            "degree_source": degree_source,
            "count": count,
            "failed": failed,
            "config": cfg,
            "graphs": records,
        }),
    )?;
    log::info!("generated {} of {count} graphs into {}", count - failed, out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(gen: &Path, test: &Path, metrics: &[Metric], cfg: &PipelineConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let gen_graphs = load_corpus(gen)?;
    let test_graphs = load_corpus(test)?;
    let report = error_report(&gen_graphs, &test_graphs, &metric_list(metrics), cfg.seed, Execution::Parallel)?;
    write(&out.join("eval.csv"), &report.to_csv())?;
    write_json(
        &out.join("eval.json"),
        &json!({ "command": "eval", "gen_dir": gen, "test_dir": test, "config": cfg, "report": report }),
    )?;
    print!("{}", report.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn cmd_recover(graph: &Path, n_starts: usize, solver: Solver, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let truth = load_edge_list(graph)?;
    let (recovered, report) = recover(&truth, n_starts, solver, cfg, cfg.seed)?;
    save_edge_list(&recovered, out.join("recovered.txt"))?;
    write_json(
        &out.join("recover.json"),
        &json!({ "command": "recover", "graph": graph, "config": cfg, "report": report }),
    )?;
    println!("hamming {}", report.hamming);
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(input: &Path, metrics: &[Metric], cfg: &PipelineConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let graphs: Vec<(PathBuf, Graph)> = if input.is_dir() {
        load_graph_dir(input)?
    } else if input.exists() {
        vec![(input.to_path_buf(), load_edge_list(input)?)]
    } else {
        bail!(Error::Precondition(format!("{} does not exist", input.display())));
    };
    let metrics = metric_list(metrics);
    let seeds = derive_seeds(cfg.seed, graphs.len());
    let mut csv = String::from("graph,metric,index,value\n");
    let mut entries = Vec::with_capacity(graphs.len());
    for ((path, g), &seed) in graphs.iter().zip(&seeds) {
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("unprintable file name {}", path.display()))?;
        let mut stats = serde_json::Map::new();
        for &m in &metrics {
            let value = match statistic(g, m, seed) {
                Ok(v) => {
                    for (i, x) in v.values.iter().enumerate() {
                        csv.push_str(&format!("{name},{m},{i},{x}\n"));
                    }
                    json!(v)
                }
                Err(e) => json!({ "error": e.to_string() }),
            };
            stats.insert(m.to_string(), value);
        }
        entries.push(json!({ "graph": name, "n": g.n(), "edges": g.edge_count(), "seed": seed, "statistics": stats }));
    }
    write(&out.join("stats.csv"), &csv)?;
    write_json(
        &out.join("stats.json"),
        &json!({ "command": "stats", "input": input, "config": cfg, "graphs": entries }),
    )?;
    Ok(ExitCode::SUCCESS)
}
