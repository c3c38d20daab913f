//! Experiment runner behind the `dppfluct` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{Outcome, RunOptions};
pub use config::ConfigError;
