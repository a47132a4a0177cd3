use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use matmono_sim::{run_experiment, ExperimentConfig, SimError};

#[derive(Parser)]
#[command(name = "mmo", version, about = "Monte-Carlo experiments for the matrix-monotonic transceiver solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV.
    Run(RunArgs),
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run only the oracle algorithm of an experiment.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    parallel: Option<usize>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

fn load(args: &RunArgs, oracle: bool) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    if cfg.output.is_none() {
        return Err(SimError::Config("no output file: pass --out or set `output`".into()));
    }
    if args.parallel == Some(0) {
        return Err(SimError::Config("--parallel must be at least 1".into()));
    }
    if oracle {
        cfg = cfg.oracle_only()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, oracle: bool) -> Result<ExitCode, SimError> {
    let cfg = load(args, oracle)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.parallel {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SimError::Config(e.to_string()))?;
    let records = pool.install(|| run_experiment(&cfg))?;
    let stalled = records.iter().filter(|r| !r.converged).count();
    info!("{} records written to {}", records.len(), cfg.output.as_ref().unwrap().display());
    if stalled > 0 {
        warn!("{stalled} of {} solves did not converge", records.len());
        if cfg.strict {
            return Ok(ExitCode::from(EXIT_NONCONVERGED));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMO_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Oracle(a) => run(a, true),
        Command::Validate { config } => ExperimentConfig::load(config).map(|_| {
            println!("{}: ok", config.display());
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e @ SimError::Config(_)) => {
            error!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
