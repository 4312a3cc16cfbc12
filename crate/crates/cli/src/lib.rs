//! Command-line workflows around the `kinseg` library: segment a set of
//! demonstrations, sweep the window length, ablate feature groups and
//! generate synthetic data.

pub mod args;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
