//! Lens pose from wand training correspondences with fixed intrinsics.
//!
//! A linear DLT on undistorted normalized coordinates seeds the pose when
//! there are six or more non-coplanar points. With four or five points, or a
//! coplanar set, the seed comes from orthogonal iteration: alternate between
//! projecting the transformed world points onto their viewing rays and an
//! orthogonal Procrustes fit against those projections. The seed is then
//! refined with Levenberg-Marquardt on pixel reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{reprojection_errors, ReprojectionReport};
use crate::geometry::{
    distort_project_jacobian, nearest_rotation, project, rotate_jacobian, CameraIntrinsics,
    CameraPoint, CameraPose, GeometryError, LensId, PixelPoint, WorldPoint,
};
use crate::lm::{self, LeastSquaresProblem, LmError, LmOptions, LmReport};

/// Fewest training points a lens pose can be estimated from.
pub const MIN_TRAINING_POINTS: usize = 4;
/// Fewest points for the linear DLT path.
pub const MIN_DLT_POINTS: usize = 6;

const UNDISTORT_ITERATIONS: usize = 10;
const UNDISTORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("at least {MIN_TRAINING_POINTS} training points are required, got {0}")]
    InsufficientPoints(usize),
    #[error("training point configuration is degenerate")]
    DegenerateConfiguration,
    #[error("training set is for lens {found}, expected {expected}")]
    LensMismatch { expected: LensId, found: LensId },
    #[error("training point {index} is labelled {found} inside a {expected} set")]
    MixedLenses {
        index: usize,
        expected: LensId,
        found: LensId,
    },
    #[error("normal equations could not be solved")]
    NumericalFailure,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One clicked wand marker and its measured world position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub frame: u64,
    /// Lens-local pixel.
    pub image: PixelPoint,
    pub world: WorldPoint,
    pub lens: LensId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub lens: LensId,
    pub session: String,
    pub points: Vec<TrainingPoint>,
}

impl TrainingSet {
    pub fn new(lens: LensId, session: impl Into<String>) -> Self {
        Self {
            lens,
            session: session.into(),
            points: Vec::new(),
        }
    }

    /// Checks lens labels and the minimum point count.
    pub fn validate(&self) -> Result<(), PoseError> {
        if let Some((index, p)) = self
            .points
            .iter()
            .enumerate()
            .find(|(_, p)| p.lens != self.lens)
        {
            return Err(PoseError::MixedLenses {
                index,
                expected: self.lens,
                found: p.lens,
            });
        }
        if self.points.len() < MIN_TRAINING_POINTS {
            return Err(PoseError::InsufficientPoints(self.points.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: CameraPose,
    pub report: ReprojectionReport,
    pub optimizer: LmReport,
}

impl PoseEstimate {
    pub fn converged(&self) -> bool {
        self.optimizer.converged()
    }
}

fn normalized_rays(
    ts: &TrainingSet,
    intr: &CameraIntrinsics,
) -> Result<Vec<Vector3<f64>>, PoseError> {
    ts.points
        .iter()
        .map(|p| {
            let (x, y) =
                intr.pixel_to_normalized(&p.image, UNDISTORT_ITERATIONS, UNDISTORT_TOLERANCE)?;
            Ok(Vector3::new(x, y, 1.0))
        })
        .collect()
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

/// Linear pose estimate. Uses the DLT when possible and orthogonal
/// iteration otherwise.
pub fn solve_pose_dlt(ts: &TrainingSet, intr: &CameraIntrinsics) -> Result<CameraPose, PoseError> {
    let n = ts.points.len();
    if n < MIN_TRAINING_POINTS {
        return Err(PoseError::InsufficientPoints(n));
    }
    let rays = normalized_rays(ts, intr)?;
    let world: Vec<Vector3<f64>> = ts.points.iter().map(|p| p.world.0).collect();
    if n >= MIN_DLT_POINTS {
        if let Some(pose) = linear_dlt(&world, &rays) {
            return Ok(pose);
        }
    }
    orthogonal_iteration(&world, &rays).ok_or(PoseError::DegenerateConfiguration)
}

fn linear_dlt(world: &[Vector3<f64>], rays: &[Vector3<f64>]) -> Option<CameraPose> {
    let n = world.len();
    // Hartley normalization of both point sets.
    let wc = centroid(world);
    let wd = world.iter().map(|p| (p - wc).norm()).sum::<f64>() / n as f64;
    if !(wd > 0.0) {
        return None;
    }
    let ws = 3f64.sqrt() / wd;
    let mut tw = Matrix4::identity() * ws;
    tw[(3, 3)] = 1.0;
    tw.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-wc * ws));

    let img: Vec<(f64, f64)> = rays.iter().map(|r| (r.x, r.y)).collect();
    let (mx, my) = img.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + x / n as f64, b + y / n as f64)
    });
    let id = img
        .iter()
        .map(|&(x, y)| (x - mx).hypot(y - my))
        .sum::<f64>()
        / n as f64;
    if !(id > 0.0) {
        return None;
    }
    let is = std::f64::consts::SQRT_2 / id;
    let ti = Matrix3::new(is, 0.0, -is * mx, 0.0, is, -is * my, 0.0, 0.0, 1.0);

    let mut a = DMatrix::zeros((2 * n).max(12), 12);
    for (k, (p, &(u, v))) in world.iter().zip(&img).enumerate() {
        let w = tw * p.push(1.0);
        let (u, v) = ((u - mx) * is, (v - my) * is);
        let (x, y, z) = (w.x, w.y, w.z);
        a.row_mut(2 * k).copy_from_slice(&[
            x,
            y,
            z,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            -u * x,
            -u * y,
            -u * z,
            -u,
        ]);
        a.row_mut(2 * k + 1).copy_from_slice(&[
            0.0,
            0.0,
            0.0,
            0.0,
            x,
            y,
            z,
            1.0,
            -v * x,
            -v * y,
            -v * z,
            -v,
        ]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    // A coplanar or otherwise rank-deficient set leaves more than one null direction.
    if !(svd.singular_values[order[10]] > 1e-8 * s_max) {
        return None;
    }
    let h = v_t.row(order[11]);
    let pn = Matrix3x4::from_row_slice(h.transpose().as_slice());
    let p = ti.try_inverse()? * pn * tw;

    let mut m: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
    let mut col4: Vector3<f64> = p.column(3).into_owned();
    if m.determinant() < 0.0 {
        m = -m;
        col4 = -col4;
    }
    let svd_m = m.svd(false, false);
    let scale = svd_m.singular_values.sum() / 3.0;
    if !(scale > 0.0) {
        return None;
    }
    let rot = nearest_rotation(&m)?;
    Some(CameraPose::new(rot, col4 / scale))
}

/// Rotation `R` minimizing `sum |R (p - pbar) - (q - qbar)|^2`.
fn procrustes(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Option<nalgebra::Rotation3<f64>> {
    let pc = centroid(p);
    let qc = centroid(q);
    let h: Matrix3<f64> = p
        .iter()
        .zip(q)
        .map(|(a, b)| (b - qc) * (a - pc).transpose())
        .sum();
    nearest_rotation(&h)
}

fn orthogonal_iteration(world: &[Vector3<f64>], rays: &[Vector3<f64>]) -> Option<CameraPose> {
    let n = world.len() as f64;
    let proj: Vec<Matrix3<f64>> = rays
        .iter()
        .map(|v| v * v.transpose() / v.norm_squared())
        .collect();
    let mean_proj: Matrix3<f64> = proj.iter().sum::<Matrix3<f64>>() / n;
    let t_factor = (Matrix3::identity() - mean_proj).try_inverse()? / n;

    let optimal_t = |r: &nalgebra::Rotation3<f64>| -> Vector3<f64> {
        let s: Vector3<f64> = world
            .iter()
            .zip(&proj)
            .map(|(p, f)| (f - Matrix3::identity()) * (r * p))
            .sum();
        t_factor * s
    };
    let object_error = |r: &nalgebra::Rotation3<f64>, t: &Vector3<f64>| -> f64 {
        world
            .iter()
            .zip(&proj)
            .map(|(p, f)| ((Matrix3::identity() - f) * (r * p + t)).norm_squared())
            .sum()
    };

    let seed = procrustes(world, rays)?;
    let flips = [
        nalgebra::Rotation3::identity(),
        nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
        nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI),
        nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI),
    ];

    let mut best: Option<(f64, CameraPose)> = None;
    for flip in flips {
        let mut r = flip * seed;
        let mut t = optimal_t(&r);
        let mut err = object_error(&r, &t);
        for _ in 0..2000 {
            let q: Vec<Vector3<f64>> = world
                .iter()
                .zip(&proj)
                .map(|(p, f)| f * (r * p + t))
                .collect();
            r = procrustes(world, &q)?;
            t = optimal_t(&r);
            let new_err = object_error(&r, &t);
            let done = (err - new_err).abs() <= 1e-14 * err.max(1e-300);
            err = new_err;
            if done {
                break;
            }
        }
        let in_front = world.iter().all(|p| (r * p + t).z > 0.0);
        if in_front && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, CameraPose::new(r, t)));
        }
    }
    best.map(|(_, pose)| pose)
}

/// Pixel reprojection problem over `[w, t]` with fixed intrinsics.
pub struct PoseProblem<'a> {
    pub points: &'a [TrainingPoint],
    pub intrinsics: &'a CameraIntrinsics,
}

impl LeastSquaresProblem for PoseProblem<'_> {
    type Error = GeometryError;

    fn num_params(&self) -> usize {
        6
    }

    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let pose = CameraPose::from_params(params.as_slice());
        let mut r = DVector::zeros(2 * self.points.len());
        for (k, p) in self.points.iter().enumerate() {
            let px = project(self.intrinsics, &pose, &p.world)?;
            r[2 * k] = px.u - p.image.u;
            r[2 * k + 1] = px.v - p.image.v;
        }
        Ok(r)
    }

    fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>, GeometryError> {
        let pose = CameraPose::from_params(params.as_slice());
        let w = pose.axis_angle();
        let mut jac = DMatrix::zeros(2 * self.points.len(), 6);
        for (k, p) in self.points.iter().enumerate() {
            let rotated = pose.rotation * p.world.0;
            let pj = distort_project_jacobian(
                self.intrinsics,
                &CameraPoint(rotated + pose.translation),
            )?;
            jac.view_mut((2 * k, 0), (2, 3))
                .copy_from(&(pj.d_point * rotate_jacobian(&w, &rotated)));
            jac.view_mut((2 * k, 3), (2, 3)).copy_from(&pj.d_point);
        }
        Ok(jac)
    }
}

pub fn refine_pose(
    pose0: &CameraPose,
    ts: &TrainingSet,
    intr: &CameraIntrinsics,
    opts: &LmOptions,
) -> Result<PoseEstimate, PoseError> {
    let problem = PoseProblem {
        points: &ts.points,
        intrinsics: intr,
    };
    let start = DVector::from_row_slice(&pose0.to_params());
    let (params, optimizer) = lm::minimize(&problem, start, opts).map_err(|e| match e {
        LmError::Problem(g) => PoseError::Geometry(g),
        LmError::NumericalFailure | LmError::NonFiniteStart => PoseError::NumericalFailure,
    })?;
    let pose = if optimizer.accepted_steps == 0 {
        *pose0
    } else {
        CameraPose::from_params(params.as_slice())
    };
    let report = reprojection_errors(ts, intr, &pose)
        .map_err(|_| PoseError::InsufficientPoints(ts.points.len()))?;
    Ok(PoseEstimate {
        pose,
        report,
        optimizer,
    })
}

/// Linear seed followed by nonlinear refinement, for the requested lens.
pub fn estimate_pose(
    ts: &TrainingSet,
    lens: LensId,
    intr: &CameraIntrinsics,
    opts: &LmOptions,
) -> Result<PoseEstimate, PoseError> {
    if ts.lens != lens {
        return Err(PoseError::LensMismatch {
            expected: lens,
            found: ts.lens,
        });
    }
    ts.validate()?;
    let seed = solve_pose_dlt(ts, intr)?;
    refine_pose(&seed, ts, intr, opts)
}
