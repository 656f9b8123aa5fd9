//! Experiment driver: configuration, shared experiments, acceptance checks
//! and the subcommands that write CSV/JSON artifacts.

pub mod checks;
pub mod commands;
pub mod config;
pub mod experiments;
