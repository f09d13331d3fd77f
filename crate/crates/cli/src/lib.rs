//! Experiment runner for the herdlab toolkit: configuration files, ensemble
//! simulation, analysis, figure reproductions and self-checks.

pub mod analyze;
pub mod config;
pub mod error;
pub mod manifest;
pub mod reproduce;
pub mod simulate;
pub mod validate;

pub use error::CliError;
