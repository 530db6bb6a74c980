//! Configuration, orchestration and subcommands for the `amcert` binary.

pub mod cli;
pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use run::{replay, run_experiment, run_experiment_in, OutputRecord};
