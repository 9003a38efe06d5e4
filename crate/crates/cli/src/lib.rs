//! Command-line front end: scenario generation, simulation runs and
//! benchmark solves, with CSV/JSON outputs.

pub mod commands;
pub mod error;
pub mod output;

pub use commands::{execute, Cli};
pub use error::CliError;
