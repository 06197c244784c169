//! `dmatrack`: desk-scale DMA user-tracking experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmatrack_cli::commands;
use dmatrack_cli::config::ExperimentConfig;
use dmatrack_core::Error;

#[derive(Parser)]
#[command(name = "dmatrack", about = "DMA-based user tracking: simulation, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a train/test dataset directory.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the attention network and the trajectory refiner.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate all methods on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory from train.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the measurement-noise seed (defaults to the dataset seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full pipeline over several path counts.
    SweepPaths {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated path counts, e.g. 1,3,5.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        counts: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_gen_data(&cfg, &out, seed.unwrap_or(cfg.seed))
        }
        Command::Train { config, data, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_train(&cfg, &data, &out, seed.unwrap_or(cfg.seed))
        }
        Command::Eval { config, data, checkpoint, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_eval(&cfg, &data, &checkpoint, &out, seed)?;
            Ok(())
        }
        Command::SweepPaths { config, out, counts, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_sweep_paths(&cfg, &counts, &out, seed.unwrap_or(cfg.seed))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
