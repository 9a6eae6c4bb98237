//! `cb` — counter-braid workbench.
//!
//! Subcommands: `threshold` (single-ensemble threshold computations),
//! `curves` (EXIT curve exports), `simulate` (Monte-Carlo encode/decode
//! trials), `fig2` (the threshold-gap sweep), and `graph` (build and inspect
//! serialized braid graphs).
//!
//! Exit status: 0 on success, 1 when a sweep finished with per-cell
//! numerical failures, 2 on usage errors.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cb", version, about = "Counter braids: encoding, decoding, and threshold analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweep and trial parallelism
    /// (default: CB_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute decoding thresholds of one ensemble.
    Threshold(ThresholdArgs),
    /// Export an extended-BP or residual EXIT curve as CSV.
    Curves(CurvesArgs),
    /// Run seeded Monte-Carlo encode/decode trials.
    Simulate(SimulateArgs),
    /// Sweep the (k, beta) grid and report threshold gaps.
    Fig2(Fig2Args),
    /// Build or inspect serialized braid graphs.
    #[command(subcommand)]
    Graph(GraphCommand),
}

#[derive(Args)]
struct EnsembleArgs {
    /// Flow-node degree.
    #[arg(long)]
    k: u32,
    /// Counters per flow (beta = k / gamma); exactly one of --beta/--gamma.
    #[arg(long, conflicts_with = "gamma")]
    beta: Option<f64>,
    /// Mean counter degree.
    #[arg(long)]
    gamma: Option<f64>,
}

impl EnsembleArgs {
    fn gamma(&self) -> anyhow::Result<f64> {
        match (self.beta, self.gamma) {
            (Some(b), None) if b > 0.0 => Ok(self.k as f64 / b),
            (None, Some(g)) if g > 0.0 => Ok(g),
            _ => anyhow::bail!("exactly one of --beta/--gamma is required and must be positive"),
        }
    }

    fn beta(&self) -> anyhow::Result<f64> {
        Ok(self.k as f64 / self.gamma()?)
    }
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Comma-separated subset of bp,area,potential,coupled,modified,bp-beta.
    #[arg(long, value_delimiter = ',', default_value = "bp")]
    which: Vec<String>,
    /// Flow-activity probability; required by --which bp-beta.
    #[arg(long)]
    eps: Option<f64>,
    /// Coupling chain length for coupled/modified thresholds.
    #[arg(long, default_value_t = 128)]
    n: usize,
    /// Smoothing parameter for coupled/modified thresholds.
    #[arg(long, default_value_t = 5)]
    w: usize,
    #[arg(long)]
    tol_uncoupled: Option<f64>,
    #[arg(long)]
    tol_coupled: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    /// ebp or residual.
    #[arg(long)]
    kind: String,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Channel parameter; required for residual curves.
    #[arg(long)]
    eps: Option<f64>,
    /// Curve sample count.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    m0: usize,
    /// Counter count; alternatively derive it from --beta.
    #[arg(long, conflicts_with = "beta")]
    m1: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    f_min: u64,
    /// two-point or geometric.
    #[arg(long, default_value = "two-point")]
    model: String,
    /// Tail parameter of the geometric model.
    #[arg(long, default_value_t = 0.5)]
    tail_p: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 400)]
    max_iter: usize,
    /// Build spatially coupled graphs with this chain length.
    #[arg(long, requires = "w")]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    w: Option<usize>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct Fig2Args {
    /// Left degrees to sweep.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    k_list: Vec<u32>,
    #[arg(long, default_value_t = 0.05)]
    beta_min: f64,
    #[arg(long, default_value_t = 0.95)]
    beta_max: f64,
    #[arg(long, default_value_t = 0.05)]
    beta_step: f64,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    w: usize,
    #[arg(long)]
    tol_uncoupled: Option<f64>,
    #[arg(long)]
    tol_coupled: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Shrink the grid and budgets for a quick run: k = {3}, beta step 0.1,
    /// (N, w) = (32, 3), tolerances x4, sweep budget / 4.
    #[arg(long)]
    smoke: bool,
    /// Wide CSV output path.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Long-format CSV path (default: <out>.long.csv).
    #[arg(long)]
    long: Option<std::path::PathBuf>,
    /// JSON run manifest path (default: <out>.manifest.json).
    #[arg(long)]
    manifest: Option<std::path::PathBuf>,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build a braid graph and write its text serialization.
    Build(GraphBuildArgs),
    /// Parse, validate, and summarize a serialized graph.
    Info(GraphInfoArgs),
}

#[derive(Args)]
struct GraphBuildArgs {
    #[arg(long)]
    m0: usize,
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Second-layer counters; enables the two-layer build together with --k2.
    #[arg(long, requires = "k2")]
    m2: Option<usize>,
    #[arg(long, requires = "m2")]
    k2: Option<u32>,
    /// Layer-1 depth in bits (two-layer builds).
    #[arg(long, default_value_t = 2)]
    d1: u32,
    /// Layer-2 depth in bits (two-layer builds).
    #[arg(long, default_value_t = 32)]
    d2: u32,
    /// Coupled build: chain length (flows split as kappa = m0 / N; m1 must
    /// spread evenly over the N + w - 1 counter positions).
    #[arg(long, requires = "coupled_w", conflicts_with = "m2")]
    coupled_n: Option<usize>,
    #[arg(long, requires = "coupled_n")]
    coupled_w: Option<usize>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct GraphInfoArgs {
    #[arg(long)]
    input: std::path::PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    config::init_workers(cli.workers.or(file_config.workers));

    let outcome = match cli.command {
        Command::Threshold(args) => commands::threshold(args, &file_config),
        Command::Curves(args) => commands::curves(args, &file_config),
        Command::Simulate(args) => commands::simulate(args, &file_config),
        Command::Fig2(args) => commands::fig2(args, &file_config),
        Command::Graph(GraphCommand::Build(args)) => commands::graph_build(args),
        Command::Graph(GraphCommand::Info(args)) => commands::graph_info(args),
    };
    match outcome {
        Ok(commands::Outcome::Clean) => {}
        Ok(commands::Outcome::PartialFailure) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            // Invalid arguments surface as usage errors, numerical trouble
            // as partial failure.
            let usage = e.downcast_ref::<counter_braids::Error>().is_none_or(|ce| {
                matches!(
                    ce,
                    counter_braids::Error::Domain(_)
                        | counter_braids::Error::InvalidArgument(_)
                        | counter_braids::Error::Parse(_)
                )
            });
            std::process::exit(if usage { 2 } else { 1 });
        }
    }
}
