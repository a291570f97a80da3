use bayes_surrogate::experiment::{cmd_compare, cmd_reference, cmd_run, CommandError, ExperimentConfig};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bsurr", version, about = "Bounded GP likelihood surrogates with adaptive SMC")]
struct Cli {
    /// Cap on the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive surrogate training for every configured estimator.
    Run(Common),
    /// SMC on the true likelihood.
    Reference(Common),
    /// Marginal CS divergence (and KL to the analytic posterior) between two particle files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Config whose problem provides an analytic posterior.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, CommandError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CommandError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CommandError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Run(c) => cmd_run(&load(&c.config, c.seed)?, c.out.as_deref()),
        Command::Reference(c) => cmd_reference(&load(&c.config, c.seed)?, c.out.as_deref()),
        Command::Compare { a, b, config, seed, out } => {
            let cfg = config.map(|p| load(&p, seed)).transpose()?;
            cmd_compare(&a, &b, cfg.as_ref(), out.as_deref()).map(|_| ())
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config, None)?;
            println!("ok: {:?}, config_sha256={}", cfg.experiment, cfg.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bsurr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
