//! Configuration, run orchestration and plotting behind the `cilfuse` binary.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{DatasetSource, RunConfig};
pub use plot::{cmd_plot, PlotKind};
pub use runner::{execute, inspect, summary_table, RunManifest, RunOptions, RunOutcome, OUT_ENV};
