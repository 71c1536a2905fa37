//! Command-line front end for the `signstorm` crate: JSON configs, subcommands
//! and SVG charts. Every subcommand is callable as a library function.

pub mod chart;
pub mod commands;
pub mod config;

pub use chart::ChartKind;
pub use commands::{cmd_check, cmd_params, cmd_report, cmd_run, execute, Cli, CliError};
pub use config::RunConfig;
