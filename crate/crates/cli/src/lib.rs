//! Experiment runner behind the `obsplan` binary: configs, sweeps, manifests, plots.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod manifest;
pub mod plot;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use manifest::RunManifest;
