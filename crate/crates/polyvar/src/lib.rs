//! Monte Carlo harness around `polyvar-core`: empirical distances to
//! normality, log-log rate fits and the `polyvar` command line.

pub mod commands;
pub mod config;
pub mod distances;
pub mod error;
pub mod experiment;
pub mod fit;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentResult, ExperimentRow};
