//! Command-line orchestration of the sensory-word pipeline: configuration,
//! artifact bundles, and the train/apply/evaluate/sweep/ablate/stats
//! commands.

pub mod args;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult, Stage};
