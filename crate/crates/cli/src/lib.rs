//! Command-line front end: configuration, data ingestion, artifacts, plots.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;
pub mod plot;

pub use commands::{exit_code, LoadedData, Metrics, SweepRecord, TrainOutcome};
pub use config::RunConfig;
