//! Config-driven driver for the `wschaos` binary.

use thiserror::Error;
use wschaos::analysis::AnalysisError;
use wschaos::gpe::GpeError;
use wschaos::lattice::LatticeError;
use wschaos::units::UnitsError;
use wschaos::ws_basis::BasisError;

pub mod commands;
pub mod config;
pub mod output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<UnitsError> for CliError {
    fn from(e: UnitsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        match e {
            BasisError::InvalidBox(_) | BasisError::BoxTooSmall { .. } | BasisError::CutoffTooLarge { .. } | BasisError::File(_) => {
                CliError::Usage(e.to_string())
            }
            BasisError::Io(_) | BasisError::Json(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::InvalidSystem(_) | LatticeError::Layout(_) | LatticeError::Units(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GpeError> for CliError {
    fn from(e: GpeError) -> Self {
        match e {
            GpeError::Lattice(l) => l.into(),
            GpeError::InvalidSettings(_) | GpeError::IncompatibleGrid | GpeError::NotNormalized(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Lattice(l) => l.into(),
            AnalysisError::InvalidLaunch(_) | AnalysisError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
