//! Experiment runner for `vfunc-core`: strict JSON configs, checkpoints,
//! CSV/PGM artifacts and the `vfunc` subcommands.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, Task};
pub use run::{resolve, run, Command, Overrides, RunError, Summary};
