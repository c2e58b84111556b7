use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cilfuse_cli::{cmd_plot, execute, inspect, summary_table, PlotKind, RunOptions};
use clap::{Args, Parser, Subcommand};

/// Class-incremental learning with fused, pruned per-round extractors.
#[derive(Parser)]
#[command(name = "cilfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output root; defaults to the config's output_dir, then $CILFUSE_OUT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

impl From<RunArgs> for RunOptions {
    fn from(a: RunArgs) -> Self {
        RunOptions {
            config: a.config,
            out: a.out,
            seed: a.seed,
            force: a.force,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over every round and seed, with checkpoints.
    Run(RunArgs),
    /// Train the ablation table and write a summary per row.
    Ablate(RunArgs),
    /// Render SVG plots from a metrics file.
    Plot {
        /// metrics.csv written by run or ablate.
        metrics: PathBuf,
        #[arg(long, value_enum, default_value = "accuracy")]
        kind: PlotKind,
        /// Directory for the SVG files; defaults to the metrics file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a run's manifest and pruning statistics.
    Inspect {
        /// Run directory.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => train(a.into(), false),
        Command::Ablate(a) => train(a.into(), true),
        Command::Plot { metrics, kind, out } => {
            let out = out.unwrap_or_else(|| metrics.parent().map(PathBuf::from).unwrap_or_default());
            for p in cmd_plot(&metrics, kind, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Inspect { dir } => {
            print!("{}", inspect(&dir)?);
            Ok(())
        }
    }
}

fn train(opts: RunOptions, ablate: bool) -> Result<()> {
    let outcome = execute(&opts, ablate, |line| eprintln!("{line}"))?;
    println!("config hash: {}", outcome.config_hash);
    println!("output: {}", outcome.dir.display());
    print!("{}", summary_table(&outcome.summaries));
    Ok(())
}
