//! `qtopk`: run distributed top-k experiments and write their traces.
//!
//! Exit codes: 0 success, 2 config or input error, 3 step-size schedule
//! violation, 4 divergence in at least one replication, 5 I/O failure.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qtopk::baseline::{run_baseline, ProtocolCost};
use qtopk::config::{parse_data, ConfigError, ExperimentConfig, Overrides};
use qtopk::output::{write_run, AGGREGATE_FILE};
use qtopk::protocol::ProtocolError;
use qtopk::quantile::{
    agents_at_or_above, p_interval_for_k, sample_quantile, Dataset, QuantileParam,
};
use qtopk::simulator::{Execution, Experiment, SimError, Target};

const EXIT_CONFIG: u8 = 2;
const EXIT_SCHEDULE: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "qtopk",
    version,
    about = "Distributed top-k selection over noisy networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a config file.
    Run(RunArgs),
    /// Compute the sample quantile and top-k agents of a data file centrally.
    Quantile(QuantileArgs),
    /// Run noiseless list gossip on a config's graph and data.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct TargetArgs {
    /// Select the k largest values.
    #[arg(long)]
    k: Option<usize>,
    /// Estimate the p-quantile directly.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Link-noise variance; implies Gaussian noise.
    #[arg(long)]
    sigma2: Option<f64>,
    #[command(flatten)]
    target: TargetArgs,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Maximum number of replications run in parallel.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Skip the step-size inequalities.
    #[arg(long)]
    allow_unsafe_schedule: bool,
}

#[derive(Debug, Args)]
struct QuantileArgs {
    /// Whitespace- or comma-separated values, one per agent.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    target: TargetArgs,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    sigma2: Option<f64>,
    #[command(flatten)]
    target: TargetArgs,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Schedule(_) | SimError::Protocol(ProtocolError::BetaAboveBound { .. }) => {
                EXIT_SCHEDULE
            }
            SimError::Divergence { .. } => EXIT_DIVERGENCE,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Quantile(args) => cmd_quantile(args),
        Command::Baseline(args) => cmd_baseline(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let overrides = Overrides {
        seed: args.seed,
        replications: args.replications,
        iterations: args.iterations,
        sigma2: args.sigma2,
        k: args.target.k,
        p: args.target.p,
        output: args.output,
    };
    let cfg = load(&args.config, &overrides)?;
    let dir = cfg.output.dir.clone().ok_or_else(|| {
        Failure::new(
            EXIT_CONFIG,
            "no output directory: set [output] dir or pass --output",
        )
    })?;
    let built = cfg.build(args.allow_unsafe_schedule)?;
    let exp = Experiment::new(built.sim)?;
    let exec = Execution::Parallel {
        jobs: args.jobs.map(|j| j as usize),
    };
    let result = exp.run_monte_carlo(exec)?;
    write_run(&dir, &exp, &result, &built.resolved)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", dir.display())))?;

    let param = exp.param();
    println!("theta_p = {}", exp.theta());
    println!("p = {} (k = {})", param.p(), param.k());
    println!("true_topk = {:?}", exp.true_topk());
    println!(
        "lambda2 = {}, lambdaN = {}, beta0 = {}",
        exp.spectral().lambda2,
        exp.spectral().lambda_n,
        exp.schedule().beta0
    );
    let agg = &result.aggregate;
    println!(
        "replications: {} completed, {} aborted",
        agg.completed,
        agg.aborted.len()
    );
    if let Some(last) = agg.records.last() {
        println!(
            "t = {}: mean_error = {}, max_error = {}, frac_topk_correct = {}",
            last.t, last.mean_error, last.max_error, last.frac_topk_correct
        );
    }
    println!("wrote {}", dir.join(AGGREGATE_FILE).display());

    if let Some(err) = result
        .replications
        .iter()
        .find_map(|o| o.result.as_ref().err())
    {
        return Err(Failure::new(
            EXIT_DIVERGENCE,
            format!(
                "{} of {} replications aborted; first: {err}",
                agg.aborted.len(),
                agg.aborted.len() as u64 + agg.completed
            ),
        ));
    }
    Ok(())
}

fn cmd_quantile(args: QuantileArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.data)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", args.data.display())))?;
    let dataset = Dataset::new(parse_data(&text)?).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let n = dataset.len();
    let param = match (args.target.k, args.target.p) {
        (Some(k), None) => QuantileParam::for_k(n, k),
        (None, Some(p)) => QuantileParam::new(p, n),
        _ => return Err(Failure::new(EXIT_CONFIG, "pass exactly one of --k or --p")),
    }
    .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let interval = p_interval_for_k(n, param.k()).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let theta = sample_quantile(&dataset, param);

    println!("theta_p = {theta}");
    println!("p = {}", param.p());
    println!("k = {}", param.k());
    println!("p_interval = ({}, {})", interval.lo, interval.hi);
    println!("topk_agents = {:?}", agents_at_or_above(&dataset, theta));
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<(), Failure> {
    let overrides = Overrides {
        sigma2: args.sigma2,
        k: args.target.k,
        p: args.target.p,
        ..Default::default()
    };
    let cfg = load(&args.config, &overrides)?;
    let graph = cfg.build_graph()?;
    let dataset = Dataset::new(cfg.data_values()?).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let n = dataset.len();
    let k = match cfg.target.target()? {
        Target::K(k) => k,
        Target::P(p) => QuantileParam::new(p, n)
            .map_err(|e| Failure::new(EXIT_CONFIG, e))?
            .k(),
    };
    let report =
        run_baseline(&graph, &dataset, k, &cfg.noise).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let ours = ProtocolCost::for_graph(&graph);

    println!("rounds_to_converge = {}", report.rounds_to_converge);
    println!("topk_agents = {:?}", report.lists[0].origins());
    println!();
    println!(
        "{:<26} {:>12} {:>18}",
        "cost", "list_gossip", "quantile_protocol"
    );
    println!(
        "{:<26} {:>12} {:>18}",
        "reals_per_round_max", report.cost.reals_per_round_max, ours.reals_per_round
    );
    println!(
        "{:<26} {:>12} {:>18}",
        "memory_slots_per_agent", report.cost.memory_slots_per_agent, ours.memory_slots_per_agent
    );
    println!(
        "{:<26} {:>12} {:>18}",
        "reals_transmitted", report.cost.reals_transmitted, "-"
    );
    Ok(())
}
