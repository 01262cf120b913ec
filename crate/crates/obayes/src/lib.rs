//! Command-line layer for objective-Bayes screening analysis: CSV and TOML
//! input, CSV/JSON reports and a parallel follow-up design search on top of
//! `obayes-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod input;
pub mod report;
pub mod search;

pub use config::{ExperimentConfig, Format, Overrides};
pub use error::{CliError, Result};
