//! Configuration, initial maps and the run driver behind the `graphflow` binary.

pub mod config;
pub mod initial;
pub mod runner;

pub use config::{parse_config, RunConfig};
pub use initial::InitialMap;
pub use runner::run_cli;
