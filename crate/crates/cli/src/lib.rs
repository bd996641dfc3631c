//! Driver for thermal and real-time operator-space MPS runs: config parsing,
//! snapshot and manifest files, CSV output and the subcommand pipeline.

pub mod config;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod operators;
pub mod pipeline;
pub mod snapshot;
pub mod table;

pub use config::RunConfig;
pub use error::{exit, CliError};
pub use pipeline::Context;
