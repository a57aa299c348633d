//! Command-line harness: configs in, comparison reports and sample tables out.

pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod sweep;

pub use error::{CliError, CliResult};
