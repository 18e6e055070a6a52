//! Command-line front end for the PointHop library: dataset conversion,
//! fitting and evaluation runs, ablation sweeps and channel inspection.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use bundle::RunBundle;
pub use config::{ExperimentConfig, ExperimentFile, Precision};
pub use error::CliError;
