use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use perc::baselines::{dense_batch, rho_ratio, tc_batch};
use perc::cluster::scc_cluster;
use perc::crowd::{crowd_error_rate, InteractiveOracle, Oracle, ReplayOracle, SimulatedOracle, WorkerModel};
use perc::harness::{precision_recall_f1, report, run_experiment, synth_world, ExperimentConfig, Strategy};
use perc::next::{build_state, select_batch};
use perc::{io as files, ReliabilityParams, UncertainGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "perc", version, about = "Reliability-driven question selection for crowdsourced entity resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full question loop and write curve, clusters and votes.
    Run(Box<RunArgs>),
    /// Cluster records from a vote file.
    Cluster {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        /// Write clusters.csv here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the next questions to ask, one `a,b,score` line each.
    Next {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long, default_value = "perc")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        mc_samples: usize,
    },
    /// Pairwise precision, recall and F1 of a clusters.csv against gold.
    Eval {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Generate a synthetic world: records.csv and gold.csv.
    Synth {
        #[arg(long)]
        entities: usize,
        #[arg(long)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every option may also come from `--config`, a file of `key = value`
/// lines named like the long flags. Flags win over the file.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    /// Gold labels for a simulated crowd and for metrics.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Recorded votes to answer from instead of a simulated crowd.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Ask on standard input and output instead of a simulated crowd.
    #[arg(long)]
    interactive: bool,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    initial: Option<usize>,
    #[arg(long)]
    workers: Option<u32>,
    #[arg(long)]
    error_rate: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    exact_edge_limit: Option<usize>,
    /// Score at most this many intra-block candidates per block each round.
    #[arg(long)]
    intra_sample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const CONFIG_KEYS: &[&str] = &[
    "records",
    "gold",
    "replay",
    "interactive",
    "strategy",
    "budget",
    "batch",
    "initial",
    "workers",
    "error-rate",
    "mc-samples",
    "epsilon",
    "exact-edge-limit",
    "intra-sample",
    "seed",
    "eval-every",
    "out",
];

fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), n + 1);
        };
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key `{key}`", path.display(), n + 1);
        }
        values.insert(key, value.trim().to_string());
    }
    Ok(values)
}

struct Resolved {
    file: HashMap<String, String>,
}

impl Resolved {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")),
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = Resolved {
        file: match &args.config {
            Some(path) => read_config(path)?,
            None => HashMap::new(),
        },
    };
    let defaults = ExperimentConfig::default();
    let params = ReliabilityParams::default();
    let workers = WorkerModel {
        workers_per_pair: cfg.get(args.workers, "workers")?.unwrap_or(defaults.workers.workers_per_pair),
        error_rate: cfg.get(args.error_rate, "error-rate")?.unwrap_or(defaults.workers.error_rate),
    };
    let config = ExperimentConfig {
        strategy: cfg.get(args.strategy, "strategy")?.unwrap_or(defaults.strategy),
        budget: cfg.get(args.budget, "budget")?.unwrap_or(defaults.budget),
        batch_size: cfg.get(args.batch, "batch")?.unwrap_or(defaults.batch_size),
        initial_pairs: cfg.get(args.initial, "initial")?.unwrap_or(defaults.initial_pairs),
        workers,
        reliability: ReliabilityParams {
            mc_samples: cfg.get(args.mc_samples, "mc-samples")?.unwrap_or(params.mc_samples),
            epsilon: cfg.get(args.epsilon, "epsilon")?.unwrap_or(params.epsilon),
            exact_edge_limit: cfg.get(args.exact_edge_limit, "exact-edge-limit")?.unwrap_or(params.exact_edge_limit),
            intra_pair_sample: cfg.get(args.intra_sample, "intra-sample")?,
            ..params
        },
        seed: cfg.get(args.seed, "seed")?.unwrap_or(defaults.seed),
        eval_every: cfg.get(args.eval_every, "eval-every")?.unwrap_or(defaults.eval_every),
    };
    let records_path: PathBuf = cfg
        .get(args.records, "records")?
        .context("--records is required")?;
    let gold_path: Option<PathBuf> = cfg.get(args.gold, "gold")?;
    let replay_path: Option<PathBuf> = cfg.get(args.replay, "replay")?;
    let interactive = args.interactive || cfg.get(None::<bool>, "interactive")?.unwrap_or(false);
    let out: PathBuf = cfg.get(args.out, "out")?.context("--out is required")?;

    let records = files::read_records(&records_path)?;
    let gold = gold_path.as_deref().map(files::read_gold).transpose()?;
    let stdin = io::stdin();
    let mut oracle: Box<dyn Oracle> = match (&replay_path, interactive, &gold) {
        (Some(_), true, _) => bail!("--replay and --interactive are mutually exclusive"),
        (Some(path), false, _) => Box::new(ReplayOracle::new(files::read_votes(path)?)?),
        (None, true, _) => Box::new(InteractiveOracle::new(stdin.lock(), io::stdout(), workers.workers_per_pair)?),
        (None, false, Some(gold)) => Box::new(SimulatedOracle::new(gold.clone(), workers, config.seed)?),
        (None, false, None) => bail!("one of --gold, --replay or --interactive is required"),
    };

    let outcome = run_experiment(&config, records, oracle.as_mut(), gold.as_ref())?;
    report(&outcome, &out)?;

    let mut stdout = io::stdout().lock();
    if let Some(last) = outcome.final_snapshot() {
        writeln!(stdout, "final {last}")?;
    }
    writeln!(
        stdout,
        "stop={:?} reclusters={} recluster_fraction={:.4}",
        outcome.stop,
        outcome.reclusters,
        outcome.recluster_fraction()
    )?;
    if let (Some(gold), false) = (&gold, outcome.votes.is_empty()) {
        writeln!(stdout, "crowd_error_rate={:.2}%", crowd_error_rate(&outcome.votes, gold)?)?;
    }
    if outcome.stopped_early() {
        writeln!(stdout, "warning: replay log exhausted before the budget")?;
    }
    Ok(())
}

fn load_graph(records: &Path, votes: &Path) -> Result<UncertainGraph> {
    Ok(UncertainGraph::ingest_votes(
        files::read_records(records)?,
        files::read_votes(votes)?,
    )?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Cluster { records, votes, out } => {
            let graph = load_graph(&records, &votes)?;
            let clustering = scc_cluster(&graph);
            match out {
                Some(path) => files::write_clusters(&path, &graph, &clustering)?,
                None => {
                    let mut stdout = io::stdout().lock();
                    writeln!(stdout, "record_id,cluster_id")?;
                    for (i, id) in graph.records().iter().enumerate() {
                        let head = clustering.block(clustering.block_of(i))[0];
                        writeln!(stdout, "{id},{}", graph.record(head))?;
                    }
                }
            }
            Ok(())
        }
        Command::Next {
            records,
            votes,
            strategy,
            count,
            seed,
            mc_samples,
        } => {
            let graph = load_graph(&records, &votes)?;
            let clustering = scc_cluster(&graph);
            let mut stdout = io::stdout().lock();
            match strategy {
                Strategy::Perc => {
                    let params = ReliabilityParams {
                        mc_samples,
                        seed,
                        ..Default::default()
                    };
                    let state = build_state(&graph, &clustering, &params)?;
                    for c in select_batch(&state, count) {
                        let (a, b) = graph.pair_ids(c.pair);
                        writeln!(stdout, "{a},{b},{:.6}", c.gain)?;
                    }
                }
                Strategy::Dense => {
                    for pair in dense_batch(&graph, &clustering, count, &None) {
                        let (j, k) = (clustering.block_of(pair.lo()), clustering.block_of(pair.hi()));
                        let rho = rho_ratio(&graph, clustering.block(j), clustering.block(k));
                        let (a, b) = graph.pair_ids(pair);
                        writeln!(stdout, "{a},{b},{rho:.6}")?;
                    }
                }
                Strategy::Tc => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for pair in tc_batch(&graph, &mut rng, count, &None) {
                        let (a, b) = graph.pair_ids(pair);
                        writeln!(stdout, "{a},{b},")?;
                    }
                }
            }
            Ok(())
        }
        Command::Eval { clusters, gold } => {
            let labels = files::read_clusters(&clusters)?;
            let gold = files::read_gold(&gold)?;
            let graph = UncertainGraph::new(labels.keys().cloned())?;
            let predicted = files::clustering_from_labels(&graph, &labels)?;
            let m = precision_recall_f1(&graph, &predicted, &gold)?;
            println!("precision,recall,f1");
            println!("{:.6},{:.6},{:.6}", m.precision, m.recall, m.f1);
            Ok(())
        }
        Command::Synth {
            entities,
            records,
            seed,
            out,
        } => {
            let (ids, gold) = synth_world(entities, records, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            files::write_records(&out.join("records.csv"), &ids)?;
            files::write_gold(&out.join("gold.csv"), &gold)?;
            println!("wrote {} records over {entities} entities to {}", ids.len(), out.display());
            Ok(())
        }
    }
}
