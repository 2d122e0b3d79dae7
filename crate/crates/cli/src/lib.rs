//! Command-line harness for pauli-lll: run configurations, presets, pipelines and manifests.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipelines;
pub mod presets;

pub use cli::cli_main;
pub use config::RunConfig;
pub use error::{HarnessError, HarnessResult};
pub use pipelines::{run, run_in, RunOutcome, Summary};
