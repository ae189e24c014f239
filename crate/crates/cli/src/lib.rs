//! Command-line harness around `vimech`: synthetic data generation, plain
//! simulation, derivative checks and parameter identification, all driven by
//! a single JSON experiment config.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::RunOptions;
pub use error::{CliError, CliResult};
