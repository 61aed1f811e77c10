//! Scenario runner for the `qntl` simulator: resolves configs, dispatches
//! experiments, and writes reports, plot data and the threat catalog.

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod report;

pub use error::CliError;
