//! Command-line front end: TOML configuration, experiment drivers and CSV output.

pub mod commands;
pub mod config;
pub mod table;

pub use config::ExperimentConfig;
pub use table::Table;
