//! Scenario files, capture/report CSVs and the `run`, `analyze` and `sweep`
//! commands behind the `tsn5g` binary.

pub mod capture;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_analyze, cmd_run, cmd_sweep, simulate, sweep, WindowMode};
pub use config::ScenarioConfig;
pub use error::CliError;
