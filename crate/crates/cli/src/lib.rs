//! Command implementations behind the `irslab` binary.
//!
//! Each `cmd_*` function takes a resolved [`ExperimentConfig`], writes its
//! artifacts atomically under `output_dir` with the config echoed at the top
//! of every file, and returns the paths together with the in-memory results.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{
    cmd_estimate, cmd_optimize, cmd_simulate, cmd_sweep, cmd_validate_config, scenario_hash,
};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
