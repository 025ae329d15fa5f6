//! JSON files for calibration results and lens poses.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::extrinsic::PoseEstimate;
use crate::geometry::{CameraIntrinsics, CameraPose, LensId};
use crate::intrinsic::{CalibrationResult, CornerView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub intrinsics: CameraIntrinsics,
    pub rms_error: f64,
    pub views: Vec<ViewSummary>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub id: String,
    pub mean_error: f64,
}

impl CalibrationFile {
    pub fn new(result: &CalibrationResult, views: &[CornerView]) -> Self {
        Self {
            intrinsics: result.intrinsics,
            rms_error: result.rms_error,
            views: views
                .iter()
                .zip(&result.view_errors)
                .map(|(v, &e)| ViewSummary {
                    id: v.id.clone(),
                    mean_error: e,
                })
                .collect(),
            converged: result.converged(),
            iterations: result.optimizer.iterations,
        }
    }
}

pub fn write_calibration_json(file: &CalibrationFile) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(file).expect("calibration serializes");
    out.push(b'\n');
    out
}

/// Reads intrinsics from a calibration file or from a bare intrinsics object.
pub fn parse_intrinsics_json(bytes: &[u8]) -> Result<CameraIntrinsics, DataError> {
    #[derive(Deserialize)]
    struct Wrapped {
        intrinsics: CameraIntrinsics,
    }
    let intr = match serde_json::from_slice::<Wrapped>(bytes) {
        Ok(w) => w.intrinsics,
        Err(_) => serde_json::from_slice::<CameraIntrinsics>(bytes)
            .map_err(|e| DataError::Json(e.to_string()))?,
    };
    if !intr.is_valid() {
        return Err(DataError::schema(
            "intrinsics",
            "focal lengths must be positive and all coefficients finite",
        ));
    }
    Ok(intr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub lens: LensId,
    pub session: String,
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    /// Millimetres.
    pub translation: [f64; 3],
    pub mean_error: f64,
    pub sigma: f64,
    pub points: usize,
    pub converged: bool,
}

impl PoseFile {
    pub fn new(lens: LensId, session: &str, estimate: &PoseEstimate) -> Self {
        let m = estimate.pose.rotation.matrix();
        let t = estimate.pose.translation;
        Self {
            lens,
            session: session.to_string(),
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
            mean_error: estimate.report.mean,
            sigma: estimate.report.sigma,
            points: estimate.report.count,
            converged: estimate.converged(),
        }
    }

    pub fn pose(&self) -> Result<CameraPose, DataError> {
        let r = &self.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        CameraPose::from_matrix(m, Vector3::from(self.translation))
            .map_err(|e| DataError::schema("pose/rotation", e.to_string()))
    }
}

pub fn write_pose_json(file: &PoseFile) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(file).expect("pose serializes");
    out.push(b'\n');
    out
}

pub fn parse_pose_json(bytes: &[u8]) -> Result<PoseFile, DataError> {
    let file: PoseFile =
        serde_json::from_slice(bytes).map_err(|e| DataError::Json(e.to_string()))?;
    file.pose()?;
    Ok(file)
}
