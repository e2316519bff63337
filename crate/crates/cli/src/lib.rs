//! Configuration-driven experiment runner for the `volcon` binary.
//!
//! A run is a sequence of stages (`profile`, `rates`, `backward`, `chains`,
//! `report`) sharing one output directory. Outputs are byte-identical for a
//! fixed configuration whatever the worker count; only the `timestamp` field
//! of `report.json` varies.

pub mod config;
pub mod error;
pub mod io;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use stages::{run_backward, run_chains, run_profile, run_rates, run_report, write_profile, Experiment};
