//! `gengrad`: reproducible experiments on generalized gradients of nonsmooth
//! network risk functionals.
//!
//! Exit codes: 0 when every check passes, 1 on a tolerance failure, 2 on a
//! configuration or I/O error. `GENGRAD_THREADS` caps internal parallelism;
//! results are byte-identical at any setting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_converge, cmd_gradcheck, cmd_lipschitz, cmd_mollifier, cmd_subgrad, out_dir, Context};
use config::{ExperimentConfig, OutputFormat};
use gengrad_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gengrad",
    about = "Experiments on generalized gradients of nonsmooth network risks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout summary format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference and path-sum cross-checks of the gradient.
    Gradcheck(CommonArgs),
    /// Gradient convergence sweep over the approximant index.
    Converge(CommonArgs),
    /// Limiting-subgradient witness sequence.
    Subgrad(CommonArgs),
    /// Tabulates the approximant values and derivatives for plotting.
    Mollifier(CommonArgs),
    /// Empirical local Lipschitz constant of the risk.
    Lipschitz(CommonArgs),
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GENGRAD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("GENGRAD_THREADS={v:?} is not an integer")))?;
        if n == 0 {
            return Err(Error::InvalidArgument("GENGRAD_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<bool> {
    configure_threads()?;
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&Context) -> Result<bool>) = match &cli.command {
        Command::Gradcheck(a) => (a, cmd_gradcheck),
        Command::Converge(a) => (a, cmd_converge),
        Command::Subgrad(a) => (a, cmd_subgrad),
        Command::Mollifier(a) => (a, cmd_mollifier),
        Command::Lipschitz(a) => (a, cmd_lipschitz),
    };
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    let ctx = Context {
        out_dir: out_dir(&config, args.out.as_deref()),
        format: args.format.or(config.format).unwrap_or(OutputFormat::Json),
        config,
    };
    runner(&ctx)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("gengrad: {e}");
            ExitCode::from(2)
        }
    }
}
