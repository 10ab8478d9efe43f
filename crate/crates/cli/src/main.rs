mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalysisFailure, OutDir};
use config::CommonArgs;

/// Ray-trace, simulate and analyse beam-scanning channel sounder data.
#[derive(Debug, Parser)]
#[command(name = "beamscan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump traced paths per case.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        /// Include paths outside the array field of view.
        #[arg(long)]
        all_paths: bool,
    },
    /// Synthesize PDP tensors per case.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write a tensor with the blocker walking through.
        #[arg(long)]
        blocker: bool,
    },
    /// Analyse tensors written by `simulate`.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding caseNN.bscn files.
        #[arg(long)]
        tensors: PathBuf,
    },
    /// Simulate and analyse in one go.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the blockage sequence.
        #[arg(long)]
        no_blocker: bool,
    },
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Trace { common, all_paths } => {
            let cfg = common.resolve()?;
            commands::trace(&cfg, &OutDir::new(&common.out, common.force)?, all_paths)
        }
        Command::Simulate { common, blocker } => {
            let cfg = common.resolve()?;
            commands::simulate(&cfg, &OutDir::new(&common.out, common.force)?, blocker)
        }
        Command::Analyze { common, tensors } => {
            let cfg = common.resolve()?;
            commands::analyze(&cfg, &OutDir::new(&common.out, common.force)?, &tensors)
        }
        Command::Run { common, no_blocker } => {
            let cfg = common.resolve()?;
            commands::run(&cfg, &OutDir::new(&common.out, common.force)?, !no_blocker)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<AnalysisFailure>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
