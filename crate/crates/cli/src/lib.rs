//! Configuration parsing and commands behind the `nvch` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_check, cmd_converge, cmd_run, Failure, Options};
pub use config::{parse_config, ConfigError, RunConfig};
