//! Library side of the `spot` command-line tool: config files, run bundles
//! and the subcommand implementations.

pub mod bundle;
pub mod commands;
pub mod config;
mod error;

pub use error::{CliError, CliResult};
