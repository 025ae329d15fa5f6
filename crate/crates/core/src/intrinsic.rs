//! Per-lens intrinsic calibration from chessboard corner views.
//!
//! The pipeline is the usual planar one: a normalized-DLT homography per
//! view, closed-form zero-skew intrinsics from the image of the absolute
//! conic, per-view poses from the homography columns, and finally a joint
//! Levenberg-Marquardt refinement of all twelve intrinsic parameters and
//! every view pose.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    distort_project_jacobian, nearest_rotation, project, rotate_jacobian, CameraIntrinsics,
    CameraPose, GeometryError, PixelPoint, WorldPoint, NUM_INTRINSICS,
};
use crate::lm::{self, LeastSquaresProblem, LmError, LmOptions, LmReport};

/// Condition number of the conic constraint system above which the views
/// are treated as degenerate.
const MAX_CONSTRAINT_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("at least 4 correspondences are needed, got {0}")]
    InsufficientPoints(usize),
    #[error("point configuration is degenerate")]
    DegenerateConfiguration,
    #[error("at least 3 views are needed, got {0}")]
    InsufficientViews(usize),
    #[error("board orientations do not constrain the intrinsics")]
    DegenerateOrientations,
    #[error("homography cannot be decomposed into a pose")]
    DegenerateHomography,
    #[error("invalid board: {0}")]
    InvalidBoard(String),
    #[error("{0}")]
    InconsistentInput(String),
    #[error("normal equations could not be solved")]
    NumericalFailure,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    /// Interior corners per row.
    pub cols: usize,
    /// Interior corners per column.
    pub rows: usize,
    /// Square side in millimetres.
    pub square_size: f64,
}

impl BoardSpec {
    pub fn new(cols: usize, rows: usize, square_size: f64) -> Result<Self, CalibrationError> {
        if cols < 3 || rows < 3 {
            return Err(CalibrationError::InvalidBoard(format!(
                "{cols}x{rows} corners, need at least 3x3"
            )));
        }
        if !(square_size > 0.0) || !square_size.is_finite() {
            return Err(CalibrationError::InvalidBoard(format!(
                "square size {square_size} must be positive"
            )));
        }
        Ok(Self {
            cols,
            rows,
            square_size,
        })
    }

    pub fn corner_count(&self) -> usize {
        self.cols * self.rows
    }

    /// Board corners `(X, Y, 0)` in row-major order.
    pub fn board_points(&self) -> Vec<WorldPoint> {
        (0..self.rows)
            .flat_map(|r| {
                (0..self.cols).map(move |c| {
                    WorldPoint::new(
                        c as f64 * self.square_size,
                        r as f64 * self.square_size,
                        0.0,
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub board: WorldPoint,
    pub image: PixelPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerView {
    pub id: String,
    pub corners: Vec<Correspondence>,
}

impl CornerView {
    pub fn from_image_points(
        id: impl Into<String>,
        board: &BoardSpec,
        image: &[PixelPoint],
    ) -> Self {
        Self {
            id: id.into(),
            corners: board
                .board_points()
                .into_iter()
                .zip(image)
                .map(|(b, &i)| Correspondence { board: b, image: i })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<CameraPose>,
    /// `sqrt(sum |e|^2 / N)` over all corners, in pixels.
    pub rms_error: f64,
    /// Mean Euclidean error per view, in pixels.
    pub view_errors: Vec<f64>,
    pub optimizer: LmReport,
}

impl CalibrationResult {
    pub fn converged(&self) -> bool {
        self.optimizer.converged()
    }
}

/// Similarity transform moving points to centroid 0 with mean distance sqrt(2).
fn normalizing_transform(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let mean_dist = pts
        .iter()
        .map(|&(x, y)| (x - mx).hypot(y - my))
        .sum::<f64>()
        / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Returns singular values sorted descending and the right singular vector
/// of the smallest one.
fn null_vector(a: DMatrix<f64>) -> Option<(Vec<f64>, DVector<f64>)> {
    let cols = a.ncols();
    let a = if a.nrows() < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.rows_mut(0, a.nrows()).copy_from(&a);
        padded
    } else {
        a
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sorted = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = *order.last()?;
    Some((sorted, v_t.row(last).transpose()))
}

/// Board-plane point and its image, as `((x, y), (u, v))`.
pub type PlaneCorrespondence = ((f64, f64), (f64, f64));

/// Least-squares plane-to-image homography by normalized DLT.
pub fn estimate_homography(
    correspondences: &[PlaneCorrespondence],
) -> Result<Homography, CalibrationError> {
    let n = correspondences.len();
    if n < 4 {
        return Err(CalibrationError::InsufficientPoints(n));
    }
    let plane: Vec<_> = correspondences.iter().map(|c| c.0).collect();
    let image: Vec<_> = correspondences.iter().map(|c| c.1).collect();
    let tp = normalizing_transform(&plane);
    let ti = normalizing_transform(&image);

    let mut a = DMatrix::zeros(2 * n, 9);
    for (k, (&(x, y), &(u, v))) in plane.iter().zip(&image).enumerate() {
        let p = tp * Vector3::new(x, y, 1.0);
        let q = ti * Vector3::new(u, v, 1.0);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        a.row_mut(2 * k)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(2 * k + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let (sv, h) = null_vector(a).ok_or(CalibrationError::DegenerateConfiguration)?;
    if !(sv[7] > 1e-10 * sv[0]) {
        return Err(CalibrationError::DegenerateConfiguration);
    }
    let hn = Matrix3::from_row_slice(h.as_slice());
    let ti_inv = ti
        .try_inverse()
        .ok_or(CalibrationError::DegenerateConfiguration)?;
    let mut hm = ti_inv * hn * tp;
    if hm[(2, 2)].abs() > f64::EPSILON * hm.amax() {
        hm /= hm[(2, 2)];
    } else {
        hm /= hm.norm();
    }
    if !(hm.determinant().abs() > 1e-12) {
        return Err(CalibrationError::DegenerateConfiguration);
    }
    Ok(Homography(hm))
}

fn conic_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 5] {
    let hi = h.column(i);
    let hj = h.column(j);
    // Unknowns (B11, B22, B13, B23, B33); B12 = 0 under zero skew.
    [
        hi[0] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Closed-form zero-skew intrinsics from three or more plane homographies.
pub fn init_intrinsics(homographies: &[Homography]) -> Result<CameraIntrinsics, CalibrationError> {
    let m = homographies.len();
    if m < 3 {
        return Err(CalibrationError::InsufficientViews(m));
    }
    // Rescale pixels to order one so the constraint matrix is well scaled.
    let scale = homographies
        .iter()
        .map(|h| h.0[(0, 2)].abs().max(h.0[(1, 2)].abs()) / h.0[(2, 2)].abs())
        .filter(|s| s.is_finite() && *s > 0.0)
        .sum::<f64>()
        / m as f64;
    let scale = if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    };
    let t = Matrix3::new(1.0 / scale, 0.0, 0.0, 0.0, 1.0 / scale, 0.0, 0.0, 0.0, 1.0);

    let mut v = DMatrix::zeros(2 * m, 5);
    for (k, h) in homographies.iter().enumerate() {
        let hs = t * h.0;
        let hs = hs / hs.norm();
        let v12 = conic_row(&hs, 0, 1);
        let v11 = conic_row(&hs, 0, 0);
        let v22 = conic_row(&hs, 1, 1);
        v.row_mut(2 * k).copy_from_slice(&v12);
        let diff: Vec<f64> = v11.iter().zip(&v22).map(|(a, b)| a - b).collect();
        v.row_mut(2 * k + 1).copy_from_slice(&diff);
    }
    let (sv, b) = null_vector(v).ok_or(CalibrationError::DegenerateOrientations)?;
    // The last singular value spans the solution; the rest must be well conditioned.
    if !(sv[3] > 0.0) || sv[0] / sv[3] > MAX_CONSTRAINT_CONDITION {
        return Err(CalibrationError::DegenerateOrientations);
    }
    let b = if b[0] < 0.0 { -b } else { b };
    let (b11, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4]);
    if !(b11 > 0.0 && b22 > 0.0) {
        return Err(CalibrationError::DegenerateOrientations);
    }
    let cx = -b13 / b11;
    let cy = -b23 / b22;
    let lambda = b33 - b13 * b13 / b11 - b23 * b23 / b22;
    if !(lambda > 0.0) {
        return Err(CalibrationError::DegenerateOrientations);
    }
    let fx = (lambda / b11).sqrt();
    let fy = (lambda / b22).sqrt();
    Ok(CameraIntrinsics::pinhole(
        fx * scale,
        fy * scale,
        cx * scale,
        cy * scale,
    ))
}

/// Board pose relative to the camera from a plane homography.
pub fn init_view_pose(
    intr: &CameraIntrinsics,
    h: &Homography,
) -> Result<CameraPose, CalibrationError> {
    let a_inv = intr
        .camera_matrix()
        .try_inverse()
        .ok_or(CalibrationError::DegenerateHomography)?;
    let g = a_inv * h.0;
    let norm = g.column(0).norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CalibrationError::DegenerateHomography);
    }
    let mut lambda = 1.0 / norm;
    if g[(2, 2)] * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1: Vector3<f64> = g.column(0) * lambda;
    let r2: Vector3<f64> = g.column(1) * lambda;
    let r3 = r1.cross(&r2);
    let t: Vector3<f64> = g.column(2) * lambda;
    let rot = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]))
        .ok_or(CalibrationError::DegenerateHomography)?;
    Ok(CameraPose::new(rot, t))
}

/// Joint reprojection problem over intrinsics and per-view poses. Parameters
/// are the twelve intrinsics followed by `[w, t]` for each view.
pub struct CalibrationProblem<'a> {
    views: &'a [CornerView],
    rows: usize,
}

impl<'a> CalibrationProblem<'a> {
    pub fn new(views: &'a [CornerView]) -> Self {
        let rows = views.iter().map(|v| 2 * v.corners.len()).sum();
        Self { views, rows }
    }

    pub fn pack(intr: &CameraIntrinsics, poses: &[CameraPose]) -> DVector<f64> {
        let mut p = Vec::with_capacity(NUM_INTRINSICS + 6 * poses.len());
        p.extend_from_slice(&intr.to_params());
        for pose in poses {
            p.extend_from_slice(&pose.to_params());
        }
        DVector::from_vec(p)
    }

    pub fn unpack(params: &DVector<f64>) -> (CameraIntrinsics, Vec<CameraPose>) {
        let s = params.as_slice();
        let intr = CameraIntrinsics::from_params(&s[..NUM_INTRINSICS]);
        let poses = s[NUM_INTRINSICS..]
            .chunks_exact(6)
            .map(CameraPose::from_params)
            .collect();
        (intr, poses)
    }
}

impl LeastSquaresProblem for CalibrationProblem<'_> {
    type Error = GeometryError;

    fn num_params(&self) -> usize {
        NUM_INTRINSICS + 6 * self.views.len()
    }

    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let (intr, poses) = Self::unpack(params);
        let mut r = DVector::zeros(self.rows);
        let mut row = 0;
        for (view, pose) in self.views.iter().zip(&poses) {
            for c in &view.corners {
                let p = project(&intr, pose, &c.board)?;
                r[row] = p.u - c.image.u;
                r[row + 1] = p.v - c.image.v;
                row += 2;
            }
        }
        Ok(r)
    }

    fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>, GeometryError> {
        let (intr, poses) = Self::unpack(params);
        let mut jac = DMatrix::zeros(self.rows, self.num_params());
        let mut row = 0;
        for (k, (view, pose)) in self.views.iter().zip(&poses).enumerate() {
            let w = pose.axis_angle();
            let col = NUM_INTRINSICS + 6 * k;
            for c in &view.corners {
                let rotated = pose.rotation * c.board.0;
                let cam = crate::geometry::CameraPoint(rotated + pose.translation);
                let pj = distort_project_jacobian(&intr, &cam)?;
                jac.view_mut((row, 0), (2, NUM_INTRINSICS))
                    .copy_from(&pj.d_intrinsics);
                jac.view_mut((row, col), (2, 3))
                    .copy_from(&(pj.d_point * rotate_jacobian(&w, &rotated)));
                jac.view_mut((row, col + 3), (2, 3)).copy_from(&pj.d_point);
                row += 2;
            }
        }
        Ok(jac)
    }
}

fn map_lm_error(e: LmError<GeometryError>) -> CalibrationError {
    match e {
        LmError::Problem(g) => CalibrationError::Geometry(g),
        LmError::NumericalFailure | LmError::NonFiniteStart => CalibrationError::NumericalFailure,
    }
}

/// Per-view mean errors and overall RMS.
fn view_statistics(
    intr: &CameraIntrinsics,
    poses: &[CameraPose],
    views: &[CornerView],
) -> Result<(f64, Vec<f64>), GeometryError> {
    let mut total_sq = 0.0;
    let mut count = 0usize;
    let mut per_view = Vec::with_capacity(views.len());
    for (view, pose) in views.iter().zip(poses) {
        let mut sum = 0.0;
        for c in &view.corners {
            let e = project(intr, pose, &c.board)?.distance(&c.image);
            sum += e;
            total_sq += e * e;
        }
        count += view.corners.len();
        per_view.push(if view.corners.is_empty() {
            0.0
        } else {
            sum / view.corners.len() as f64
        });
    }
    let rms = if count == 0 {
        0.0
    } else {
        (total_sq / count as f64).sqrt()
    };
    Ok((rms, per_view))
}

pub fn refine_calibration(
    init: &CameraIntrinsics,
    poses: &[CameraPose],
    views: &[CornerView],
    opts: &LmOptions,
) -> Result<CalibrationResult, CalibrationError> {
    if poses.len() != views.len() {
        return Err(CalibrationError::InconsistentInput(format!(
            "{} poses for {} views",
            poses.len(),
            views.len()
        )));
    }
    let problem = CalibrationProblem::new(views);
    let start = CalibrationProblem::pack(init, poses);
    let (params, report) = lm::minimize(&problem, start, opts).map_err(map_lm_error)?;
    let (intrinsics, poses) = CalibrationProblem::unpack(&params);
    let (rms_error, view_errors) = view_statistics(&intrinsics, &poses, views)?;
    Ok(CalibrationResult {
        intrinsics,
        poses,
        rms_error,
        view_errors,
        optimizer: report,
    })
}

fn check_views(views: &[CornerView], board: &BoardSpec) -> Result<(), CalibrationError> {
    if views.len() < 3 {
        return Err(CalibrationError::InsufficientViews(views.len()));
    }
    for v in views {
        if v.corners.len() != board.corner_count() {
            return Err(CalibrationError::InconsistentInput(format!(
                "view `{}` has {} corners, board has {}",
                v.id,
                v.corners.len(),
                board.corner_count()
            )));
        }
    }
    Ok(())
}

/// Full calibration of one lens from its chessboard views.
pub fn calibrate(
    views: &[CornerView],
    board: &BoardSpec,
    opts: &LmOptions,
) -> Result<CalibrationResult, CalibrationError> {
    check_views(views, board)?;
    let homographies = views
        .iter()
        .map(|v| {
            let corr: Vec<_> = v
                .corners
                .iter()
                .map(|c| ((c.board.0.x, c.board.0.y), (c.image.u, c.image.v)))
                .collect();
            estimate_homography(&corr)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let init = init_intrinsics(&homographies)?;
    let poses = homographies
        .iter()
        .map(|h| init_view_pose(&init, h))
        .collect::<Result<Vec<_>, _>>()?;
    refine_calibration(&init, &poses, views, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn board_validation() {
        assert!(BoardSpec::new(9, 6, 35.3).is_ok());
        assert!(BoardSpec::new(2, 6, 35.3).is_err());
        assert!(BoardSpec::new(9, 6, 0.0).is_err());
        let b = BoardSpec::new(3, 3, 2.0).unwrap();
        let pts = b.board_points();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1].0.x, 2.0);
        assert_eq!(pts[3].0.y, 2.0);
    }

    #[test]
    fn unit_square_identity() {
        let c = [
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (1.0, 0.0)),
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ];
        let h = estimate_homography(&c).unwrap();
        assert!((h.0 - Matrix3::identity()).amax() < 1e-12, "{}", h.0);
    }

    #[test]
    fn too_few_points() {
        let c = [((0.0, 0.0), (0.0, 0.0)); 3];
        assert_eq!(
            estimate_homography(&c),
            Err(CalibrationError::InsufficientPoints(3))
        );
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let c: Vec<_> = (0..6)
            .map(|i| ((i as f64, 2.0 * i as f64), (3.0 * i as f64, i as f64)))
            .collect();
        assert_eq!(
            estimate_homography(&c),
            Err(CalibrationError::DegenerateConfiguration)
        );
    }

    #[test]
    fn too_few_views() {
        let h = Homography(Matrix3::identity());
        assert_eq!(
            init_intrinsics(&[h, h]),
            Err(CalibrationError::InsufficientViews(2))
        );
    }

    #[test]
    fn calibrate_rejects_wrong_corner_count() {
        let board = BoardSpec::new(3, 3, 1.0).unwrap();
        let view = CornerView {
            id: "v".into(),
            corners: vec![],
        };
        let views = vec![view.clone(), view.clone(), view];
        assert!(matches!(
            calibrate(&views, &board, &LmOptions::default()),
            Err(CalibrationError::InconsistentInput(_))
        ));
    }
}
