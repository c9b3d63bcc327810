use std::path::PathBuf;

use thiserror::Error;

use crate::units::Dimension;

/// Configuration and validation failures. These are raised before or
/// between simulation steps; runtime faults inside a running simulation are
/// recorded as [`crate::kernel::SimEvent`]s instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("`{value}` has no unit (expected {expected})")]
    MissingUnit { value: String, expected: Dimension },
    #[error("bad quantity `{value}`: {reason}")]
    BadQuantity { value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("operating point violates envelope: {frequency_hz} Hz exceeds f_max {f_max_hz} Hz at {voltage_v} V")]
    Envelope {
        frequency_hz: u64,
        voltage_v: f64,
        f_max_hz: u64,
    },
    #[error("voltage {0} V outside the calibrated operating range")]
    VoltageRange(f64),
    #[error("address regions overlap: `{a}` and `{b}`")]
    Overlap { a: String, b: String },
    #[error("XAIF capacity exceeded for {resource}: requested {requested}, {available} available")]
    Capacity {
        resource: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("illegal power transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("cycle limit must be positive")]
    ZeroCycleLimit,
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

/// A parse error with a 1-based source position.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

/// Top-level error for loading files and running scenarios.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{}", format_validation(.0))]
    Validation(Vec<ValidationIssue>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// One validation failure with where it was found.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationIssue {
    pub location: String,
    pub message: String,
}

fn format_validation(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("{}: {}", i.location, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
