use std::io;
use std::path::PathBuf;

use negdelay_core::{AnalysisError, BlockError, SimError, TfError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid chain text.
    #[error("{0}")]
    Input(String),
    #[error("{count} sweep point(s) fall on a pole or zero; rows marked nan")]
    PoleInSweep { count: usize },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("fitted exponent {exponent:.4} lies outside [0.4, 0.6]")]
    FitOutOfRange { exponent: f64 },
    #[error("transfer function is unstable")]
    Unstable,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::PoleInSweep { .. } => 3,
            CliError::Simulation(_) => 4,
            CliError::FitOutOfRange { .. } => 5,
            CliError::Unstable => 6,
            CliError::Write { .. } => 1,
        }
    }
}

impl From<BlockError> for CliError {
    fn from(e: BlockError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TfError> for CliError {
    fn from(e: TfError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Block(b) => b.into(),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Block(b) => b.into(),
            AnalysisError::EmptyInput(_) | AnalysisError::InvalidThreshold(_) => CliError::Input(e.to_string()),
            other => CliError::Simulation(other.to_string()),
        }
    }
}
