use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use climattr_core::attribution::AttributionError;
use climattr_core::ingest::IngestError;
use climattr_core::simulate::SimulateError;
use climattr_core::stats::StatsError;
use climattr_core::Month;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// A simulation oracle check failed.
    OracleFailure,
    /// Bad flags or config values.
    Usage,
    /// Unreadable, missing or malformed input data.
    Input,
    /// A monthly fit had no usable spread or perfectly collinear data.
    DegenerateFit,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::OracleFailure => 1,
            ErrorKind::Usage | ErrorKind::Input => 2,
            ErrorKind::DegenerateFit => 3,
        }
    }
}

/// The error object printed to stderr as one line of JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub exit_code: u8,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub month: Option<Month>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            exit_code: kind.exit_code(),
            message: message.into(),
            path: None,
            month: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn oracle(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::OracleFailure, message)
    }

    /// Attaches a path and prefixes it to the message.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self.path = Some(path.to_path_buf());
        self
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::input(err.to_string()).at(path)
    }

    pub fn ingest(path: &Path, err: IngestError) -> Self {
        Self::input(err.to_string()).at(path)
    }

    /// Prints the error object and converts it into the process exit code.
    pub fn report(&self) -> ExitCode {
        let body = serde_json::json!({ "error": self });
        eprintln!("{body}");
        ExitCode::from(self.exit_code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<StatsError> for CliError {
    fn from(err: StatsError) -> Self {
        let kind = if err.is_degenerate() {
            ErrorKind::DegenerateFit
        } else {
            ErrorKind::Input
        };
        let mut out = CliError::new(kind, err.to_string());
        out.month = err.month();
        out
    }
}

impl From<AttributionError> for CliError {
    fn from(err: AttributionError) -> Self {
        match err {
            AttributionError::Stats(e) => e.into(),
            AttributionError::NegativeHorizon(_) | AttributionError::InvalidWeight(_) => {
                CliError::usage(err.to_string())
            }
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<SimulateError> for CliError {
    fn from(err: SimulateError) -> Self {
        match err {
            SimulateError::Stats(e) => e.into(),
            SimulateError::Attribution(e) => e.into(),
            SimulateError::TooFew { .. } => CliError::usage(err.to_string()),
            other => CliError::input(other.to_string()),
        }
    }
}
