//! Command-line front end: each subcommand runs one stage of the islanding
//! pipeline and renders its artifacts in memory before anything is written.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;

use std::path::PathBuf;

use island_core::partition::PartitionError;
use island_core::report::ReportError;
use island_core::{CaseError, CoherencyError, PowerFlowError, SimError};
use thiserror::Error;

pub use args::{Cli, Command, KeepPairs, Options};
pub use commands::{run, Outcome};
pub use output::Artifacts;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Constraint(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 1 numeric failure, 2 constraint violation, 3 input or I/O error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Constraint(_) => 2,
            CliError::Input(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        match e {
            CaseError::Io { ref path, .. } => CliError::Input(format!("{}: {e}", path.display())),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Coherency(c) => c.into(),
            ReportError::Parse { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<PowerFlowError> for CliError {
    fn from(e: PowerFlowError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<CoherencyError> for CliError {
    fn from(e: CoherencyError) -> Self {
        match e {
            CoherencyError::BadK { .. } | CoherencyError::InvalidWeights(_) => CliError::Input(e.to_string()),
            CoherencyError::Cluster(p) => p.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::Infeasible(..)
            | PartitionError::CannotLink(..)
            | PartitionError::MustLink(..)
            | PartitionError::KeepEdgeCut(_) => CliError::Constraint(e.to_string()),
            PartitionError::UnknownBus(_)
            | PartitionError::UnknownBranch(_)
            | PartitionError::UnknownGenerator(_)
            | PartitionError::Dimension { .. }
            | PartitionError::BadWeight { .. }
            | PartitionError::TooManyClusters { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadStep(_)
            | SimError::ShortHorizon { .. }
            | SimError::OutOfHorizon { .. }
            | SimError::BranchOpen(_) => CliError::Input(e.to_string()),
            SimError::Network(p) => p.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
