use std::path::Path;

use omnigt::dataio::DataError;
use omnigt::evaluation::EvaluationError;
use omnigt::extrinsic::PoseError;
use omnigt::geometry::LensId;
use omnigt::intrinsic::CalibrationError;
use omnigt::mapping::MappingError;
use omnigt::sync::SyncError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{} in {file}: {source}", source.kind())]
    Data { file: String, source: DataError },
    #[error("CalibrationError: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("PoseError ({lens}): {source}")]
    Pose { lens: LensId, source: PoseError },
    #[error("MappingError: {0}")]
    Mapping(#[from] MappingError),
    #[error("SyncError: {0}")]
    Sync(#[from] SyncError),
    #[error("EvaluationError: {0}")]
    Evaluation(#[from] EvaluationError),
    #[error("IoError at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Usage(String),
}

impl CliError {
    pub fn data(file: &Path, source: DataError) -> Self {
        CliError::Data {
            file: file.display().to_string(),
            source,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
