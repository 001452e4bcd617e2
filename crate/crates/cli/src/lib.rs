//! Configuration files and subcommands of the `rebalance` binary.

pub mod commands;
pub mod config;

pub use commands::{Overrides, Report};
pub use config::RunConfig;
