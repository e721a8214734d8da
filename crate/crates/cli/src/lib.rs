//! Experiment runner for the `tropmorph` toolkit: TOML configs in, result
//! CSVs, plots and a manifest out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
