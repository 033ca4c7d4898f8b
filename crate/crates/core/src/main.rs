use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twbn::bench::{run_bench, run_method, verify, BenchConfig, Budget, LearnMethod, Reference, RunConfig, ScoreSource};
use twbn::dataset::CategoricalTable;
use twbn::exact::EXACT_CAP;
use twbn::graph::{format_dag, read_dag_file};
use twbn::scoring::{format_scores, read_scores, ExploreConfig, PairwiseStats, ScoreCache, DEFAULT_MAX_SETS};
use twbn::search::DEFAULT_NODE_BUDGET;
use twbn::synth::{forward_sample, format_network, gen_inverted_tree, gen_random_network, read_network, GroundTruthNetwork};
use twbn::{Error, Result};

const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Bayesian network structure learning under a treewidth bound.
#[derive(Parser)]
#[command(name = "twbn", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Write the main result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate and score candidate parent sets.
    Score(ScoreArgs),
    /// Learn a DAG of bounded treewidth.
    Learn(LearnArgs),
    /// Learn the unbounded optimum exactly (small problems).
    Exact(ExactArgs),
    /// Generate synthetic networks and data.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Check a DAG file's acyclicity, scores and treewidth.
    Verify(VerifyArgs),
    /// Compare learners on one dataset.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Score cache written by `score`.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    no_header: bool,
    /// Largest parent-set size explored.
    #[arg(long, short = 'k', alias = "treewidth")]
    k: usize,
    /// Sets kept per variable.
    #[arg(long, default_value_t = DEFAULT_MAX_SETS)]
    max_sets: usize,
    #[arg(long)]
    max_parents: Option<usize>,
    /// Per-variable time limit for enumeration.
    #[arg(long)]
    time_budget_seconds: Option<f64>,
    /// Skip the pruning bound (size caps still apply).
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, short = 'k')]
    treewidth: usize,
    /// kg, kastar, s2 or s2plus.
    #[arg(long, default_value = "kg")]
    method: String,
    #[arg(long)]
    time_budget_seconds: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Expanded states per order for kastar.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SETS)]
    max_sets: usize,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Largest parent-set size when scoring from data.
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
    #[arg(long, default_value_t = EXACT_CAP)]
    cap: usize,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Inverted k-ary tree with random binary CPTs, as a network file.
    InvertedTree {
        #[arg(long, short = 'k')]
        k: usize,
        #[arg(long, short = 'n')]
        n: usize,
    },
    /// Random network with random CPTs, as a network file.
    RandomNet {
        #[arg(long, short = 'n')]
        n: usize,
        #[arg(long, default_value_t = 6)]
        max_parents: usize,
        #[arg(long, default_value_t = 2)]
        min_card: usize,
        #[arg(long, default_value_t = 4)]
        max_card: usize,
    },
    /// Forward-sample a network file into CSV.
    Sample {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        rows: usize,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    dag: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, short = 'k')]
    treewidth: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, short = 'k')]
    treewidth: usize,
    /// Comma-separated methods.
    #[arg(long, default_value = "kg,kastar,s2,s2plus", value_delimiter = ',')]
    methods: Vec<String>,
    /// Per-method iteration limits, e.g. `kg=2000,kastar=50`.
    #[arg(long, value_delimiter = ',')]
    iterations: Vec<String>,
    /// Time limit applied to every method.
    #[arg(long)]
    time_budget_seconds: Option<f64>,
    /// exact, best-known, or a number.
    #[arg(long, default_value = "exact")]
    reference: String,
    /// DAG file whose total score is the reference.
    #[arg(long)]
    reference_dag: Option<PathBuf>,
    #[arg(long, default_value_t = EXACT_CAP)]
    exact_cap: usize,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SETS)]
    max_sets: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Error::InvalidArgument(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn seconds(s: Option<f64>) -> Result<Option<Duration>> {
    s.map(|s| {
        Duration::try_from_secs_f64(s).map_err(|_| Error::InvalidArgument(format!("invalid time budget {s}")))
    })
    .transpose()
}

fn load_table(path: &Path, no_header: bool) -> Result<CategoricalTable> {
    CategoricalTable::load_csv(path, !no_header)
}

/// Score cache from `--scores`, from `--data`, or from a score file with
/// statistics recomputed from data.
fn load_cache(input: &DataArgs, k: usize, max_sets: usize, workers: usize) -> Result<(ScoreCache, Option<CategoricalTable>)> {
    let table = input.data.as_deref().map(|p| load_table(p, input.no_header)).transpose()?;
    let cache = match (&input.scores, &table) {
        (Some(path), table) => {
            let cache = read_scores(path)?;
            match table {
                Some(t) => cache.with_stats(PairwiseStats::compute(t)?)?,
                None => cache,
            }
        }
        (None, Some(t)) => {
            let mut cfg = ExploreConfig::new(k);
            cfg.max_sets = max_sets;
            in_pool(workers, || ScoreCache::build(t, &cfg))??
        }
        (None, None) => return Err(Error::InvalidArgument("give --data or --scores".into())),
    };
    Ok((cache, table))
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run(cli: &Cli) -> Result<u8> {
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Score(a) => {
            let table = load_table(&a.data, a.no_header)?;
            let mut cfg = ExploreConfig::new(a.k);
            cfg.max_sets = a.max_sets;
            cfg.max_parents = a.max_parents;
            cfg.time_budget = seconds(a.time_budget_seconds)?;
            cfg.prune = !a.no_prune;
            let cache = in_pool(cli.workers, || ScoreCache::build(&table, &cfg))??;
            let s = cache.prune_stats();
            eprintln!(
                "scored {} variables: evaluated={} pruned={} capped={} timed_out={}",
                cache.n_vars(),
                s.evaluated,
                s.pruned,
                s.capped,
                s.timed_out
            );
            emit(out, &format_scores(&cache))?;
        }
        Command::Learn(a) => {
            let method: LearnMethod = a.method.parse()?;
            if method == LearnMethod::Exact {
                return Err(Error::InvalidArgument("use the `exact` subcommand".into()));
            }
            let (cache, _) = load_cache(&a.input, a.treewidth, a.max_sets, cli.workers)?;
            let budget = Budget {
                iterations: a.max_iterations,
                time: seconds(a.time_budget_seconds)?,
            };
            let mut cfg = RunConfig::new(method, a.treewidth, budget);
            cfg.workers = cli.workers;
            cfg.node_budget = a.node_budget;
            let reg = run_method(&cache, &cfg, cli.seed)?;
            eprintln!(
                "{method}: best={:.6} iterations={} median={} max={} seconds={:.3}",
                reg.best_score,
                reg.iterations,
                reg.median().map_or("NA".into(), |m| format!("{m:.6}")),
                reg.max().map_or("NA".into(), |m| format!("{m:.6}")),
                reg.elapsed.as_secs_f64()
            );
            emit(out, &format_dag(&reg.best.dag))?;
        }
        Command::Exact(a) => {
            let (cache, _) = load_cache(&a.input, a.max_parents, usize::MAX, cli.workers)?;
            let mut cfg = RunConfig::new(LearnMethod::Exact, a.max_parents.max(1), Budget::default());
            cfg.exact_cap = a.cap;
            let reg = run_method(&cache, &cfg, cli.seed)?;
            info!("exact optimum {:.6}", reg.best_score);
            emit(out, &format_dag(&reg.best.dag))?;
        }
        Command::Synth(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            match s {
                SynthCommand::InvertedTree { k, n } => {
                    let dag = gen_inverted_tree(*k, *n, &mut rng)?;
                    let net = GroundTruthNetwork::with_random_cpts(dag, vec![2; *n], &mut rng)?;
                    emit(out, &format_network(&net))?;
                }
                SynthCommand::RandomNet {
                    n,
                    max_parents,
                    min_card,
                    max_card,
                } => {
                    let net = gen_random_network(*n, *max_parents, *min_card, *max_card, &mut rng)?;
                    emit(out, &format_network(&net))?;
                }
                SynthCommand::Sample { net, rows } => {
                    let net = read_network(net)?;
                    let table = forward_sample(&net, *rows, &mut rng)?;
                    emit(out, &table.to_csv())?;
                }
            }
        }
        Command::Verify(a) => {
            let file = read_dag_file(&a.dag)?;
            let table = a.input.data.as_deref().map(|p| load_table(p, a.input.no_header)).transpose()?;
            let cache = a.input.scores.as_deref().map(read_scores).transpose()?;
            let source = match (&table, &cache) {
                (Some(t), _) => ScoreSource::Data(t),
                (None, Some(c)) => ScoreSource::Cache(c),
                (None, None) => return Err(Error::InvalidArgument("give --data or --scores".into())),
            };
            let v = verify(&file, &source, a.treewidth)?;
            emit(out, &v.summary())?;
            if !v.ok() {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::Bench(a) => {
            let (cache, _) = load_cache(&a.input, a.treewidth, a.max_sets, cli.workers)?;
            let mut limits: HashMap<LearnMethod, u64> = HashMap::new();
            for item in &a.iterations {
                let (m, n) = item
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidArgument(format!("expected method=count, got {item:?}")))?;
                let n = n
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("invalid iteration count in {item:?}")))?;
                limits.insert(m.parse()?, n);
            }
            let time = seconds(a.time_budget_seconds)?;
            let methods = a
                .methods
                .iter()
                .map(|m| {
                    let m: LearnMethod = m.parse()?;
                    Ok((
                        m,
                        Budget {
                            iterations: limits.get(&m).copied(),
                            time,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let reference = match (&a.reference_dag, a.reference.as_str()) {
                (Some(path), _) => Reference::Score(read_dag_file(path)?.total_score),
                (None, "exact") => Reference::Exact { cap: a.exact_cap },
                (None, "best-known") => Reference::BestKnown,
                (None, other) => Reference::Score(
                    other
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("invalid reference {other:?}")))?,
                ),
            };
            let mut cfg = BenchConfig::new(a.treewidth, methods);
            cfg.seed = cli.seed;
            cfg.workers = cli.workers;
            cfg.node_budget = a.node_budget;
            cfg.reference = reference;
            let report = run_bench(&cache, &cfg)?;
            print!("{}", report.table());
            if let Some(path) = out {
                emit(Some(path), &report.records())?;
            }
        }
    }
    Ok(0)
}
