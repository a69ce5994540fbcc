//! Experiment driver for the `zenodyn` simulator: figure reproduction,
//! config-driven runs, regime classification and CSV/JSON output.

mod analytic_cmd;
mod csv;
mod figures;
mod report;
mod run;
mod validate;

use std::io;
use std::path::PathBuf;

use thiserror::Error;
use zenodyn::dynamics::DynamicsError;
use zenodyn::generator::GeneratorError;
use zenodyn::model::ModelError;
use zenodyn::oracle::OracleError;
use zenodyn::spectrum::SpectrumError;

pub use analytic_cmd::{evaluate_analytic, parse_params, ANALYTIC_NAMES};
pub use figures::{run_figure, FIGURES};
pub use report::ExperimentReport;
pub use run::{classify_regime, run_config, Command, Regime};
pub use validate::{validate_defaults, validate_model};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("failed checks: {}", .0.join(", "))]
    Flags(Vec<String>),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Model(_) => 2,
            CliError::Generator(GeneratorError::Unsupported(_)) => 2,
            CliError::Spectrum(SpectrumError::Background(_)) => 2,
            CliError::Dynamics(DynamicsError::Config(_)) => 2,
            CliError::Generator(_) | CliError::Dynamics(_) | CliError::Spectrum(_) | CliError::Oracle(_) => 3,
            CliError::Io { .. } => 1,
            CliError::Flags(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
