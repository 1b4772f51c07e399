use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use morse_cli::config::{ChainSourceArg, ExperimentConfig};
use morse_cli::error::{CliError, Result};
use morse_cli::pipelines::{self, RunContext};

/// Dual-sampling diffusion experiment driver.
#[derive(Parser)]
#[command(name = "morse", version, about)]
struct Cli {
    /// Override the experiment seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory from the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (falls back to MORSE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the denoiser and write its checkpoint and loss curve.
    TrainDash {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the residual model against a frozen dash checkpoint.
    TrainDot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dash_ckpt: PathBuf,
    },
    /// Generate chains and write them as CSV.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dash_ckpt: PathBuf,
        #[arg(long)]
        dot_ckpt: Option<PathBuf>,
        #[arg(long, value_enum)]
        chain_source: Option<ChainSourceArg>,
    },
    /// Run the quality-vs-latency benchmark and emit curves, speedups, and
    /// the exchanged-ratio sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dash_ckpt: PathBuf,
        #[arg(long)]
        dot_ckpt: Option<PathBuf>,
        /// Use the ideal residual corrector instead of a trained one.
        #[arg(long)]
        oracle_dot: bool,
        #[arg(long, value_enum)]
        chain_source: Option<ChainSourceArg>,
    },
}

fn thread_count(cli_threads: Option<usize>) -> Result<Option<usize>> {
    if let Some(k) = cli_threads {
        return Ok(Some(k));
    }
    match std::env::var("MORSE_THREADS") {
        Ok(v) => {
            let k: usize = v
                .parse()
                .map_err(|_| CliError::Config(format!("MORSE_THREADS must be an integer, got {v:?}")))?;
            Ok(Some(k))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = thread_count(cli.threads)? {
        if k == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool setup failed: {e}")))?;
    }

    match cli.command {
        Command::TrainDash { config } => {
            let ctx = RunContext::new(ExperimentConfig::load(&config)?, cli.seed, cli.out);
            pipelines::cmd_train_dash(&ctx)?;
        }
        Command::TrainDot { config, dash_ckpt } => {
            let ctx = RunContext::new(ExperimentConfig::load(&config)?, cli.seed, cli.out);
            pipelines::cmd_train_dot(&ctx, &dash_ckpt)?;
        }
        Command::Sample { config, dash_ckpt, dot_ckpt, chain_source } => {
            let ctx = RunContext::new(ExperimentConfig::load(&config)?, cli.seed, cli.out);
            let chain = chain_source.unwrap_or(ctx.config.morse.chain_source).into();
            pipelines::cmd_sample(&ctx, &dash_ckpt, dot_ckpt.as_deref(), false, chain)?;
        }
        Command::Bench { config, dash_ckpt, dot_ckpt, oracle_dot, chain_source } => {
            let ctx = RunContext::new(ExperimentConfig::load(&config)?, cli.seed, cli.out);
            let chain = chain_source.unwrap_or(ctx.config.morse.chain_source).into();
            pipelines::bench::cmd_bench(&ctx, &dash_ckpt, dot_ckpt.as_deref(), oracle_dot, chain)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
