use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rkrank::error::{RankError, Result};
use rkrank::graph::{erdos_renyi, laplacian_extreme_eigenvalues, ComparisonGraph};
use rkrank::harness::{
    parse_match_file, rank_matches, run_experiment, run_tracking, ConfigBuilder, Estimator, MatchData, RankOptions,
    StopConfig, StopKind, TrackConfig,
};
use rkrank::solver::EventNode;

#[derive(Parser)]
#[command(name = "rkrank", version, about = "Rank aggregation from pairwise comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic BTL experiments: error and iteration counts per trial.
    Simulate(Box<SimulateArgs>),
    /// Rank players from a head-to-head match file.
    Rank(RankArgs),
    /// Follow drifting weights with the constant-step tracking update.
    Track(TrackArgs),
    /// Extreme Laplacian eigenvalues of a comparison graph.
    Spectrum(SpectrumArgs),
}

/// Values are kept as text so they go through the same parser as the
/// config file.
#[derive(Args)]
struct SimulateArgs {
    /// key=value file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    /// Edge probability, or a comma-separated list.
    #[arg(long)]
    p: Option<String>,
    /// Comparisons per edge, or a comma-separated list.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Comma-separated subset of RK, RC, MLE.
    #[arg(long)]
    estimators: Option<String>,
    /// relative-change, ranking-stable, top-k-in-m or max-iters.
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    stop_window: Option<String>,
    #[arg(long)]
    stop_tol: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    #[arg(long)]
    top_m: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Start Kaczmarz from the breadth-first telescoped estimate.
    #[arg(long)]
    warm_start: bool,
    /// Use this edge list instead of random graphs.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// CSV path; the JSON summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add a wall-clock column (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Rk,
    Rc,
    Mle,
}

#[derive(Args)]
struct RankArgs {
    /// CSV of name_a,name_b,wins_a,wins_b.
    #[arg(long)]
    matches: PathBuf,
    #[arg(long, value_enum, default_value = "rk")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value = "relative-change")]
    stop: String,
    #[arg(long, default_value_t = 500)]
    stop_window: usize,
    #[arg(long, default_value_t = 1e-7)]
    stop_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NodeArg {
    Lower,
    Higher,
    Random,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    p: f64,
    /// Comparisons per edge before tracking starts.
    #[arg(long, default_value_t = 10)]
    k: u64,
    #[arg(long, default_value_t = 50_000)]
    events: u64,
    /// Step size in [0, 1].
    #[arg(long, default_value_t = 0.05)]
    c: f64,
    /// Per-event random-walk step of the true log-weights.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    report_every: u64,
    /// Endpoint of each observed pair that receives the update.
    #[arg(long, value_enum, default_value = "lower")]
    node: NodeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Edge list to analyze; otherwise a random graph from --n, --p, --seed.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| RankError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut b = ConfigBuilder::new();
    if let Some(path) = &args.config {
        b.apply_file(path)?;
    }
    let flags = [
        ("n", &args.n),
        ("p", &args.p),
        ("k", &args.k),
        ("epsilon", &args.epsilon),
        ("lambda", &args.lambda),
        ("estimators", &args.estimators),
        ("stop", &args.stop),
        ("stop-window", &args.stop_window),
        ("stop-tol", &args.stop_tol),
        ("top-k", &args.top_k),
        ("top-m", &args.top_m),
        ("max-iters", &args.max_iters),
        ("trials", &args.trials),
        ("seed", &args.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            b.set(key, v)?;
        }
    }
    if args.warm_start {
        b.set("warm-start", "true")?;
    }
    if args.timing {
        b.set("timing", "true")?;
    }
    if let Some(path) = &args.graph_file {
        b.set("graph-file", &path.to_string_lossy())?;
    }
    if let Some(path) = &args.out {
        b.set("out", &path.to_string_lossy())?;
    }
    let cfg = b.build()?;
    let result = run_experiment(&cfg)?;
    if result.rejections > 0 {
        log::info!("discarded {} disconnected graphs", result.rejections);
    }
    match &cfg.out {
        Some(path) => result.write_files(path),
        None => result.write_csv(output(None)?),
    }
}

fn rank(args: RankArgs) -> Result<()> {
    let records = parse_match_file(&args.matches)?;
    let data = MatchData::from_records(&records)?;
    let stop = StopConfig {
        kind: args.stop.parse::<StopKind>()?,
        window: args.stop_window,
        tol: args.stop_tol,
        ..StopConfig::default()
    };
    if stop.rule().needs_ground_truth() {
        return Err(RankError::Config(
            "rank has no ground truth; use relative-change or max-iters".into(),
        ));
    }
    let opts = RankOptions {
        estimator: match args.estimator {
            EstimatorArg::Rk => Estimator::Kaczmarz,
            EstimatorArg::Rc => Estimator::RankCentrality,
            EstimatorArg::Mle => Estimator::Mle,
        },
        epsilon: args.epsilon,
        lambda: args.lambda,
        stop: stop.rule(),
        max_iters: args.max_iters,
        seed: args.seed,
    };
    let table = rank_matches(&data, &opts)?;
    table.write_csv(output(args.out.as_deref())?)
}

fn track(args: TrackArgs) -> Result<()> {
    let cfg = TrackConfig {
        n: args.n,
        p: args.p,
        k: args.k,
        events: args.events,
        c: args.c,
        sigma: args.sigma,
        epsilon: args.epsilon,
        seed: args.seed,
        report_every: args.report_every,
        node: match args.node {
            NodeArg::Lower => EventNode::Lower,
            NodeArg::Higher => EventNode::Higher,
            NodeArg::Random => EventNode::Random,
        },
    };
    let trace = run_tracking(&cfg)?;
    log::info!("steady-state D_w {:.6}", trace.steady_state);
    trace.write_csv(output(args.out.as_deref())?)
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let g = match &args.graph_file {
        Some(path) => ComparisonGraph::read_edge_list(path)?,
        None => erdos_renyi(args.n, args.p, args.seed)?,
    };
    let s = laplacian_extreme_eigenvalues(&g)?;
    let json = serde_json::json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "connected": s.connected,
        "lambda_min_nonzero": s.lambda_min_nonzero,
        "lambda_max": s.lambda_max,
    });
    println!("{}", serde_json::to_string_pretty(&json).expect("plain json value"));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(*a),
        Command::Rank(a) => rank(a),
        Command::Track(a) => track(a),
        Command::Spectrum(a) => spectrum(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
