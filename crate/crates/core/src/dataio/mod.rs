//! On-disk formats: mocap CSV, training and ground-truth XML, corner-view
//! files, calibration JSON and the session header.

pub mod calib;
pub mod corners;
pub mod groundtruth;
pub mod mocap;
pub mod session;
pub mod training;
mod xml;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("missing header row")]
    MissingHeader,
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("frame {frame}: duplicate object {name} (id {id})")]
    DuplicateObject {
        frame: u64,
        name: String,
        id: String,
    },
    #[error("view `{view}`: expected {expected} corners, found {found}")]
    CountMismatch {
        view: String,
        expected: usize,
        found: usize,
    },
    #[error("missing file `{reference}`: {message}")]
    MissingFile { reference: String, message: String },
    #[error("invalid JSON: {0}")]
    Json(String),
}

impl DataError {
    /// Variant name, for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            DataError::MissingHeader => "MissingHeader",
            DataError::MalformedRow { .. } => "MalformedRow",
            DataError::SchemaViolation { .. } => "SchemaViolation",
            DataError::DuplicateObject { .. } => "DuplicateObject",
            DataError::CountMismatch { .. } => "CountMismatch",
            DataError::MissingFile { .. } => "MissingFile",
            DataError::Json(_) => "Json",
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        DataError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}
