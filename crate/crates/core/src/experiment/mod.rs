//! Config-driven experiment runs, cross-method comparison and plot data.

mod config;
mod report;
mod run;

pub use config::{Algorithm, AvvoSpec, ExperimentConfig, ProfileSpec, Scenario, OUTPUT_ROOT_VAR};
pub use report::{compare, emit_plot_data, plot_data_csv, Comparison, ComparisonRow, PlotRow};
pub use run::{
    build_env, episode_means, oracle_at, read_steps_csv, run_experiment, run_seed, summarize, write_seed,
    write_steps_csv, EpisodeStat, FinalStat, RunSummary, SeedFailure, SeedRun,
};

use thiserror::Error;

use crate::env::EnvError;
use crate::oldc::OldcError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Bad configuration or input file; maps to exit code 1.
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<OldcError> for ExperimentError {
    fn from(e: OldcError) -> Self {
        match e {
            OldcError::Schedule(m) => ExperimentError::Config(format!("schedule: {m}")),
            other => ExperimentError::Runtime(other.to_string()),
        }
    }
}

impl From<EnvError> for ExperimentError {
    fn from(e: EnvError) -> Self {
        ExperimentError::Runtime(e.to_string())
    }
}
