//! Experiment harness: config parsing, seeded sweep execution with CSV
//! output, and the grid-oracle subcommand.

pub mod config;
pub mod error;
pub mod runner;

pub use config::{load_config, Metric, SweepParameter, ValidatedConfig};
pub use error::CliError;
pub use runner::{cmd_oracle, cmd_run, describe, OracleArtifacts, RunArtifacts};
