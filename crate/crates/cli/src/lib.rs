//! Command-line front end: circuit files, presets, experiment drivers and
//! CSV reports.

use std::fmt;
use std::path::Path;

use hgsim_core::circuit::CircuitError;
use hgsim_core::gates::GateError;

pub mod app;
pub mod format;
pub mod mis;
pub mod presets;
pub mod report;
pub mod spf;

use format::FormatError;
use spf::SpfError;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Exit code 1.
    Validation(String),
    /// Exit code 2.
    Io(String),
    /// Exit code 3.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::EventCap(_) | CircuitError::Mode { .. } | CircuitError::Threshold { .. } => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => Self::Io(e.to_string()),
            FormatError::Circuit(c) => c.into(),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<GateError> for CliError {
    fn from(e: GateError) -> Self {
        match e {
            GateError::Mode(_) | GateError::Threshold(_) | GateError::Measurement(_) => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<SpfError> for CliError {
    fn from(e: SpfError) -> Self {
        match e {
            SpfError::Circuit(c) => c.into(),
            SpfError::Bracket { .. } | SpfError::Stalled { .. } => Self::Numeric(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}
