use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use querytree::datagen::{random_instance, synthetic_classifier_instance, zipf_prior, RandomSpec};
use querytree::experiment::{run_sweep_with, InstanceSource, Sweep, SweepAlgorithm};
use querytree::io::{instance_to_json, read_instance, write_instance};
use querytree::oracle::DEFAULT_SUBSET_BUDGET;
use querytree::{
    build_tree_with, cost_direct, cost_via_decomposition, entropy_bound, optimal_tree, BuilderConfig, DecisionTree,
    Execution, LambdaRegime, Mode, PriorChoice, ProblemInstance, TieBreak,
};
use serde_json::json;

/// Query-learning decision trees under exponential query cost.
#[derive(Parser)]
#[command(name = "querytree", version, about)]
struct Cli {
    /// Run without the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        /// Output file (.json or .csv); stdout JSON if omitted.
        #[arg(long, short, global = true)]
        out: Option<PathBuf>,
    },
    /// Build a greedy tree and report its cost.
    Build(BuildArgs),
    /// Cost of a saved tree, directly and through the entropy decomposition.
    Cost {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value = "object")]
        mode: Mode,
        /// Comma-separated; `1` and `inf` select the limits.
        #[arg(long, default_value = "1,2,inf", value_delimiter = ',')]
        lambdas: Vec<LambdaRegime>,
    },
    /// Exact optimum by memoized search (at most 64 objects).
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "1")]
        lambda: LambdaRegime,
        #[arg(long, default_value = "object")]
        mode: Mode,
        /// Maximum number of memoized subsets.
        #[arg(long, default_value_t = DEFAULT_SUBSET_BUDGET)]
        budget: usize,
        /// Write the optimal tree here.
        #[arg(long)]
        tree_out: Option<PathBuf>,
    },
    /// Average cost of several algorithms over a λ grid.
    Sweep(SweepArgs),
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for registered instances; in-memory if omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Allowed CORS origin; any origin if omitted.
        #[arg(long)]
        cors_origin: Option<String>,
        /// Static files served for non-API paths.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Seconds before an untouched session is dropped.
        #[arg(long, default_value_t = 3600)]
        idle_timeout: u64,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Bernoulli responses with a random prior, resampled until identifiable.
    Random {
        #[arg(long)]
        objects: usize,
        #[arg(long)]
        queries: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Round-robin group labels.
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Threshold classifiers on the plane, queried at grid points.
    Classifiers {
        /// Thresholds per axis.
        #[arg(long, default_value_t = 5)]
        thresholds: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Replace an instance's prior by a randomly permuted Zipf prior.
    Zipf {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "1")]
    lambda: LambdaRegime,
    #[arg(long, default_value = "object")]
    mode: Mode,
    /// Choose queries as if the prior were uniform.
    #[arg(long)]
    uniform_prior: bool,
    /// Break criterion ties by a seeded hash instead of lowest index.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the tree here.
    #[arg(long)]
    tree_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    instance: Option<PathBuf>,
    /// Generated instance: `classifiers:<thresholds>` or
    /// `random:<objects>x<queries>[:<seed>]`.
    #[arg(long)]
    gen: Option<String>,
    /// Redraw a permuted Zipf prior with this exponent every repetition.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "1.2,2,5,20,200", value_delimiter = ',')]
    lambdas: Vec<LambdaRegime>,
    /// lambda-gbs, gbs, gbs-uniform, lambda-ggbs, ggbs
    #[arg(long, default_value = "lambda-gbs,gbs,gbs-uniform", value_delimiter = ',')]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 25)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "object")]
    evaluation: Mode,
    /// CSV output; stdout if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Gen { kind, out } => generate(kind, out.as_deref()),
        Command::Build(args) => build(args, exec),
        Command::Cost { instance, tree, mode, lambdas } => cost(&instance, &tree, mode, &lambdas),
        Command::Oracle { instance, lambda, mode, budget, tree_out } => {
            let inst = load(&instance)?;
            let result = optimal_tree(&inst, lambda, mode, budget)?;
            if let Some(path) = tree_out {
                fs::write(&path, result.tree.to_json_pretty()).with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&json!({
                "lambda": lambda,
                "mode": mode,
                "cost": result.cost,
                "depth": result.tree.depth(),
                "subsets": result.subsets,
                "tree": result.tree,
            }))
        }
        Command::Sweep(args) => sweep(args, exec),
        Command::Serve { host, port, data_dir, cors_origin, static_dir, idle_timeout } => {
            init_tracing();
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host/port")?;
            let config = querytree_service::ServerConfig {
                addr,
                data_dir,
                cors_origin,
                static_dir,
                idle_timeout: Duration::from_secs(idle_timeout),
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(querytree_service::serve(config))?;
            Ok(())
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).init();
}

fn load(path: &Path) -> Result<ProblemInstance> {
    read_instance(path).with_context(|| format!("reading instance {}", path.display()))
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn generate(kind: GenKind, out: Option<&Path>) -> Result<()> {
    let inst = match kind {
        GenKind::Random { objects, queries, density, seed, groups } => random_instance(RandomSpec {
            objects,
            queries,
            density,
            seed,
            mode: if groups.is_some() { Mode::Group } else { Mode::Object },
            group_count: groups,
        })?,
        GenKind::Classifiers { thresholds, beta } => synthetic_classifier_instance(thresholds, beta, 0)?,
        GenKind::Zipf { instance, beta, seed } => {
            let mut inst = load(&instance)?;
            inst.prior = zipf_prior(inst.num_objects(), beta, seed)?.0;
            inst
        }
    };
    match out {
        Some(path) => write_instance(path, &inst).with_context(|| format!("writing {}", path.display()))?,
        None => emit(&(instance_to_json(&inst) + "\n"))?,
    }
    Ok(())
}

fn build(args: BuildArgs, exec: Execution) -> Result<()> {
    let inst = load(&args.instance)?;
    let mut config = BuilderConfig::new(args.lambda, args.mode);
    if args.uniform_prior {
        config = config.with_prior(PriorChoice::Uniform);
    }
    if let Some(seed) = args.seed {
        config = config.with_tiebreak(TieBreak::Seeded(seed));
    }
    let tree = build_tree_with(&inst, &config, exec)?;
    if let Some(path) = &args.tree_out {
        fs::write(path, tree.to_json_pretty()).with_context(|| format!("writing {}", path.display()))?;
    }
    let dist = inst.group_distribution(args.mode);
    print_json(&json!({
        "config": config,
        "cost": cost_direct(&tree, &inst, args.lambda)?,
        "entropy_bound": entropy_bound(&dist, args.lambda)?,
        "depth": tree.depth(),
        "leaves": tree.num_leaves(),
        "tree": tree,
    }))
}

fn cost(instance: &Path, tree: &Path, mode: Mode, lambdas: &[LambdaRegime]) -> Result<()> {
    let inst = load(instance)?;
    let text = fs::read_to_string(tree).with_context(|| format!("reading tree {}", tree.display()))?;
    let tree = DecisionTree::from_json(&text, mode)?;
    tree.ensure_valid(&inst)?;
    let dist = inst.group_distribution(mode);
    let mut rows = Vec::new();
    for &regime in lambdas {
        let direct = cost_direct(&tree, &inst, regime)?;
        let decomposed = match regime {
            LambdaRegime::LimitInfinity => None,
            _ => Some(cost_via_decomposition(&tree, &inst, regime)?.cost_decomposed),
        };
        rows.push(json!({
            "lambda": regime,
            "cost": direct,
            "cost_decomposed": decomposed,
            "entropy_bound": entropy_bound(&dist, regime)?,
        }));
    }
    print_json(&json!(rows))
}

fn generate_from_spec(spec: &str, beta: f64) -> Result<ProblemInstance> {
    let parts: Vec<&str> = spec.split(':').collect();
    let inst = match parts.as_slice() {
        ["classifiers", c] => synthetic_classifier_instance(c.parse().context("thresholds")?, beta, 0)?,
        ["random", dims, rest @ ..] if rest.len() <= 1 => {
            let (m, n) = dims.split_once('x').context("random size must look like 10x16")?;
            let seed = rest.first().map_or(Ok(0), |s| s.parse()).context("seed")?;
            random_instance(RandomSpec {
                objects: m.parse().context("objects")?,
                queries: n.parse().context("queries")?,
                density: 0.5,
                seed,
                mode: Mode::Object,
                group_count: None,
            })?
        }
        _ => bail!("unknown generator spec `{spec}`"),
    };
    Ok(inst)
}

fn sweep(args: SweepArgs, exec: Execution) -> Result<()> {
    let instance = match (&args.instance, &args.gen) {
        (Some(path), _) => load(path)?,
        (None, Some(spec)) => generate_from_spec(spec, args.beta.unwrap_or(1.0))?,
        (None, None) => bail!("either --instance or --gen is required"),
    };
    let source = match args.beta {
        Some(beta) => InstanceSource::ZipfPermuted { instance, beta },
        None => InstanceSource::Fixed(instance),
    };
    let algorithms = args
        .algorithms
        .iter()
        .map(|name| SweepAlgorithm::named(name.trim()))
        .collect::<querytree::Result<Vec<_>>>()?;
    let sweep = Sweep {
        source,
        lambdas: args.lambdas,
        algorithms,
        repetitions: args.reps,
        seed: args.seed,
        evaluation: args.evaluation,
    };
    let table = run_sweep_with(&sweep, exec)?;
    let csv = table.to_csv();
    match args.out {
        Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => emit(&csv)?,
    }
    Ok(())
}
