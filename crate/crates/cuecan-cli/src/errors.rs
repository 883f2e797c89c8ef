//! CLI error taxonomy and the exit-code contract: 0 ok, 1 usage, 2 data,
//! 3 numeric, 4 invariant violation.

use std::fmt;
use std::path::{Path, PathBuf};

use cuecan_core::error::CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values.
    Usage(String),
    /// Unreadable or malformed input; carries the file and, for parse
    /// failures, the byte offset.
    Data { file: Option<PathBuf>, offset: Option<usize>, msg: String },
    /// NaN or infinity inside the numeric pipeline.
    Numeric(String),
    /// A library contract was violated (shapes, configs, masks).
    Invariant(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data { file, offset, msg } => {
                write!(f, "data error")?;
                if let Some(p) = file {
                    write!(f, " in {}", p.display())?;
                }
                if let Some(o) = offset {
                    write!(f, " at byte {o}")?;
                }
                write!(f, ": {msg}")
            }
            CliError::Numeric(msg) => write!(f, "numeric error: {msg}"),
            CliError::Invariant(msg) => write!(f, "invariant violated: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data_err(file: &Path, msg: impl Into<String>) -> CliError {
    CliError::Data { file: Some(file.to_path_buf()), offset: None, msg: msg.into() }
}

pub fn parse_err(file: &Path, offset: usize, msg: impl Into<String>) -> CliError {
    CliError::Data { file: Some(file.to_path_buf()), offset: Some(offset), msg: msg.into() }
}

pub fn io_err(file: &Path, e: std::io::Error) -> CliError {
    CliError::Data { file: Some(file.to_path_buf()), offset: None, msg: e.to_string() }
}

/// Lift core results into the CLI taxonomy.
pub trait CoreExt<T> {
    fn lift(self) -> CliResult<T>;
}

impl<T> CoreExt<T> for Result<T, CoreError> {
    fn lift(self) -> CliResult<T> {
        self.map_err(|e| match e {
            CoreError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        })
    }
}
