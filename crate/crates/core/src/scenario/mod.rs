//! Case-study orchestration: configuration loading, the command pipelines
//! and deterministic result files.

mod config;
mod emit;
mod run;

pub use config::{load_config, parse_config, RawConfig, ScenarioConfig, SolverKnobs};
pub use emit::{emit, load_report, round_sig, OutputFormat, REPORT_FILES};
pub use run::{
    run_case, Command, DecisionReport, MetricsRow, ProfileRow, RegionReport, RunReport, SensitivityRow,
    SimulationReport,
};

use crate::alloc::AllocError;
use crate::freq::FreqError;
use crate::lp::LpError;
use crate::reserve::ReserveError;
use crate::statespace::{EigenError, FitError, SimError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: infeasible: {message}")]
    Infeasible { stage: &'static str, message: String },
    #[error("{stage}: solver did not converge: {message}")]
    NonConvergence { stage: &'static str, message: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl ScenarioError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 3,
            ScenarioError::Infeasible { .. } => 4,
            ScenarioError::NonConvergence { .. } => 5,
            ScenarioError::Io { .. } => 6,
            ScenarioError::Stage { .. } => 1,
        }
    }

    fn stage(stage: &'static str, e: impl ToString) -> Self {
        ScenarioError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    pub(crate) fn from_freq(stage: &'static str, e: FreqError) -> Self {
        Self::stage(stage, e)
    }

    pub(crate) fn from_fit(stage: &'static str, e: FitError) -> Self {
        match e {
            FitError::Eigen {
                source: EigenError::NonConvergence { .. },
                ..
            } => ScenarioError::NonConvergence {
                stage,
                message: e.to_string(),
            },
            other => Self::stage(stage, other),
        }
    }

    pub(crate) fn from_reserve(stage: &'static str, e: ReserveError) -> Self {
        match e {
            ReserveError::EmptyRegion => ScenarioError::Infeasible {
                stage,
                message: e.to_string(),
            },
            other => Self::stage(stage, other),
        }
    }

    pub(crate) fn from_alloc(stage: &'static str, e: AllocError) -> Self {
        match e {
            AllocError::Infeasible(message) => ScenarioError::Infeasible { stage, message },
            AllocError::Lp(LpError::IterationLimit(_)) => ScenarioError::NonConvergence {
                stage,
                message: e.to_string(),
            },
            other => Self::stage(stage, other),
        }
    }

    pub(crate) fn from_sim(stage: &'static str, e: SimError) -> Self {
        match e {
            SimError::Diverged { .. } => ScenarioError::NonConvergence {
                stage,
                message: e.to_string(),
            },
            other => Self::stage(stage, other),
        }
    }
}
