//! Experiment runner: one config file per run, every output under one
//! directory.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Invocation};
pub use config::{DataSource, RunConfig};
pub use error::{CliError, CliResult};
