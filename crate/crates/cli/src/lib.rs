//! Command-line front end: configuration, dataset loading and the
//! generate / train / analyze / eigen / info subcommands.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{DataSource, ExperimentConfig};
pub use error::{CliError, CliResult};
