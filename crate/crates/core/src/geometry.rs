//! Camera-model mathematics for a stationary dual-fisheye camera.
//!
//! Each lens is modelled as a pinhole camera with the 8-coefficient rational
//! distortion model (`k1..k6` radial, `p1, p2` tangential). World points are
//! millimetres in the motion-capture frame; pixels are continuous and
//! unclipped.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2x3, Matrix3, Rotation3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of intrinsic parameters: fx, fy, cx, cy, k1..k6, p1, p2.
pub const NUM_INTRINSICS: usize = 12;

/// Default full frame width in pixels.
pub const FRAME_WIDTH: u32 = 1920;
/// Default full frame height in pixels.
pub const FRAME_HEIGHT: u32 = 1080;
/// Default width of one lens sub-image.
pub const HALF_WIDTH: u32 = 960;

const DENOMINATOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("zero-length vector has no spherical direction")]
    ZeroVector,
    #[error("point lies behind the lens (z <= 0)")]
    BehindCamera,
    #[error("rational distortion denominator vanishes")]
    DegenerateDenominator,
    #[error("matrix is not a proper rotation")]
    NotARotation,
}

/// A point in motion-capture world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint(pub Vector3<f64>);

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }
}

/// A point in a lens camera frame (mm), +z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPoint(pub Vector3<f64>);

impl CameraPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub r: f64,
    /// Zenith angle from the optical axis, in `[0, pi]`.
    pub theta: f64,
    /// Azimuth in `(-pi, pi]`.
    pub phi: f64,
}

impl SphericalCoord {
    pub fn to_cartesian(&self) -> CameraPoint {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        CameraPoint::new(self.r * st * cp, self.r * st * sp, self.r * ct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Pinhole intrinsics plus rational distortion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub p1: f64,
    pub p2: f64,
}

impl CameraIntrinsics {
    /// Distortion-free intrinsics.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            k4: 0.0,
            k5: 0.0,
            k6: 0.0,
            p1: 0.0,
            p2: 0.0,
        }
    }

    /// Parameters in the order `fx, fy, cx, cy, k1..k6, p1, p2`.
    pub fn to_params(&self) -> [f64; NUM_INTRINSICS] {
        [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.k4, self.k5,
            self.k6, self.p1, self.p2,
        ]
    }

    pub fn from_params(p: &[f64]) -> Self {
        assert!(p.len() >= NUM_INTRINSICS);
        Self {
            fx: p[0],
            fy: p[1],
            cx: p[2],
            cy: p[3],
            k1: p[4],
            k2: p[5],
            k3: p[6],
            k4: p[7],
            k5: p[8],
            k6: p[9],
            p1: p[10],
            p2: p[11],
        }
    }

    pub fn camera_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0 && self.fy > 0.0 && self.to_params().iter().all(|v| v.is_finite())
    }

    /// Radial factor `(1 + k1 r^2 + k2 r^4 + k3 r^6) / (1 + k4 r^2 + k5 r^4 + k6 r^6)`.
    pub fn radial_factor(&self, r2: f64) -> Result<f64, GeometryError> {
        let (num, den) = self.radial_terms(r2);
        if den.abs() < DENOMINATOR_EPS {
            return Err(GeometryError::DegenerateDenominator);
        }
        Ok(num / den)
    }

    fn radial_terms(&self, r2: f64) -> (f64, f64) {
        let r4 = r2 * r2;
        let r6 = r4 * r2;
        (
            1.0 + self.k1 * r2 + self.k2 * r4 + self.k3 * r6,
            1.0 + self.k4 * r2 + self.k5 * r4 + self.k6 * r6,
        )
    }

    /// Applies distortion to ideal normalized coordinates `(x', y')`.
    pub fn distort_normalized(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let r2 = x * x + y * y;
        let radial = self.radial_factor(r2)?;
        let xy = x * y;
        Ok((
            x * radial + 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy,
        ))
    }

    /// Inverts [`distort_normalized`](Self::distort_normalized) by fixed-point
    /// iteration, stopping after `max_iter` rounds or once the update falls
    /// below `tol`.
    pub fn undistort_normalized(
        &self,
        xd: f64,
        yd: f64,
        max_iter: usize,
        tol: f64,
    ) -> Result<(f64, f64), GeometryError> {
        let (mut x, mut y) = (xd, yd);
        for _ in 0..max_iter {
            let r2 = x * x + y * y;
            let radial = self.radial_factor(r2)?;
            if radial.abs() < DENOMINATOR_EPS {
                return Err(GeometryError::DegenerateDenominator);
            }
            let xy = x * y;
            let dx = 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy;
            let nx = (xd - dx) / radial;
            let ny = (yd - dy) / radial;
            let step = (nx - x).abs().max((ny - y).abs());
            x = nx;
            y = ny;
            if step < tol {
                break;
            }
        }
        Ok((x, y))
    }

    /// Maps a pixel to undistorted normalized coordinates.
    pub fn pixel_to_normalized(
        &self,
        p: &PixelPoint,
        max_iter: usize,
        tol: f64,
    ) -> Result<(f64, f64), GeometryError> {
        let xd = (p.u - self.cx) / self.fx;
        let yd = (p.v - self.cy) / self.fy;
        self.undistort_normalized(xd, yd, max_iter, tol)
    }
}

/// Rigid transform from world coordinates into a lens frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a raw matrix, checking orthonormality and
    /// determinant to 1e-10.
    pub fn from_matrix(r: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = (r.transpose() * r - Matrix3::identity()).amax();
        if !(err <= 1e-10) || !((r.determinant() - 1.0).abs() <= 1e-10) {
            return Err(GeometryError::NotARotation);
        }
        Ok(Self::new(Rotation3::from_matrix_unchecked(r), translation))
    }

    /// Builds a pose from an axis-angle vector (direction = axis, norm = angle).
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(Rotation3::new(axis_angle), translation)
    }

    pub fn axis_angle(&self) -> Vector3<f64> {
        self.rotation.scaled_axis()
    }

    /// `[rx, ry, rz, tx, ty, tz]`.
    pub fn to_params(&self) -> [f64; 6] {
        let w = self.axis_angle();
        let t = self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    pub fn from_params(p: &[f64]) -> Self {
        Self::from_axis_angle(
            Vector3::new(p[0], p[1], p[2]),
            Vector3::new(p[3], p[4], p[5]),
        )
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> CameraPose {
        let inv = self.rotation.inverse();
        CameraPose::new(inv, -(inv * self.translation))
    }

    /// Rotation angle between two poses' rotations, in radians.
    pub fn rotation_angle_to(&self, other: &CameraPose) -> f64 {
        let m = (self.rotation.inverse() * other.rotation).into_inner();
        let sin = 0.5
            * Vector3::new(
                m[(2, 1)] - m[(1, 2)],
                m[(0, 2)] - m[(2, 0)],
                m[(1, 0)] - m[(0, 1)],
            )
            .norm();
        let cos = 0.5 * (m.trace() - 1.0);
        sin.atan2(cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LensId {
    Backside,
    Buttonside,
}

impl LensId {
    pub const ALL: [LensId; 2] = [LensId::Backside, LensId::Buttonside];

    pub fn as_str(&self) -> &'static str {
        match self {
            LensId::Backside => "Backside",
            LensId::Buttonside => "Buttonside",
        }
    }

    pub fn other(&self) -> LensId {
        match self {
            LensId::Backside => LensId::Buttonside,
            LensId::Buttonside => LensId::Backside,
        }
    }
}

impl fmt::Display for LensId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LensId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Backside" => Ok(LensId::Backside),
            "Buttonside" => Ok(LensId::Buttonside),
            other => Err(format!("unknown lens `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensModel {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

/// Two opposed lenses sharing one 1920x1080 frame. Backside occupies the
/// left sub-image, Buttonside the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualLensRig {
    pub backside: LensModel,
    pub buttonside: LensModel,
    pub frame_width: u32,
    pub frame_height: u32,
    pub half_width: u32,
}

impl DualLensRig {
    pub fn new(backside: LensModel, buttonside: LensModel) -> Self {
        Self {
            backside,
            buttonside,
            frame_width: FRAME_WIDTH,
            frame_height: FRAME_HEIGHT,
            half_width: HALF_WIDTH,
        }
    }

    pub fn lens(&self, id: LensId) -> &LensModel {
        match id {
            LensId::Backside => &self.backside,
            LensId::Buttonside => &self.buttonside,
        }
    }

    /// Horizontal offset of a lens sub-image inside the full frame.
    pub fn offset(&self, id: LensId) -> f64 {
        match id {
            LensId::Backside => 0.0,
            LensId::Buttonside => self.half_width as f64,
        }
    }

    pub fn to_full_frame(&self, id: LensId, local: PixelPoint) -> PixelPoint {
        PixelPoint::new(local.u + self.offset(id), local.v)
    }

    pub fn to_local(&self, id: LensId, full: PixelPoint) -> PixelPoint {
        PixelPoint::new(full.u - self.offset(id), full.v)
    }
}

pub fn world_to_camera(pose: &CameraPose, p: &WorldPoint) -> CameraPoint {
    CameraPoint(pose.rotation * p.0 + pose.translation)
}

pub fn to_spherical(c: &CameraPoint) -> Result<SphericalCoord, GeometryError> {
    let r = c.0.norm();
    if r == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    Ok(SphericalCoord {
        r,
        theta: (c.0.z / r).clamp(-1.0, 1.0).acos(),
        phi: c.0.y.atan2(c.0.x),
    })
}

/// Rational-model projection of a camera-frame point to lens-local pixels.
pub fn distort_project(
    intr: &CameraIntrinsics,
    c: &CameraPoint,
) -> Result<PixelPoint, GeometryError> {
    let z = c.0.z;
    if !(z > 0.0) {
        return Err(GeometryError::BehindCamera);
    }
    let (xpp, ypp) = intr.distort_normalized(c.0.x / z, c.0.y / z)?;
    Ok(PixelPoint::new(
        intr.fx * xpp + intr.cx,
        intr.fy * ypp + intr.cy,
    ))
}

pub fn project(
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    p: &WorldPoint,
) -> Result<PixelPoint, GeometryError> {
    distort_project(intr, &world_to_camera(pose, p))
}

/// Projection together with its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionJacobian {
    pub pixel: PixelPoint,
    /// d(u, v) / d(x, y, z) in the camera frame.
    pub d_point: Matrix2x3<f64>,
    /// d(u, v) / d(fx, fy, cx, cy, k1..k6, p1, p2).
    pub d_intrinsics: SMatrix<f64, 2, NUM_INTRINSICS>,
}

pub fn distort_project_jacobian(
    intr: &CameraIntrinsics,
    c: &CameraPoint,
) -> Result<ProjectionJacobian, GeometryError> {
    let (x, y, z) = (c.0.x, c.0.y, c.0.z);
    if !(z > 0.0) {
        return Err(GeometryError::BehindCamera);
    }
    let xn = x / z;
    let yn = y / z;
    let r2 = xn * xn + yn * yn;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    let (num, den) = intr.radial_terms(r2);
    if den.abs() < DENOMINATOR_EPS {
        return Err(GeometryError::DegenerateDenominator);
    }
    let radial = num / den;
    let dnum = intr.k1 + 2.0 * intr.k2 * r2 + 3.0 * intr.k3 * r4;
    let dden = intr.k4 + 2.0 * intr.k5 * r2 + 3.0 * intr.k6 * r4;
    let dradial = (dnum * den - num * dden) / (den * den);

    let xy = xn * yn;
    let xpp = xn * radial + 2.0 * intr.p1 * xy + intr.p2 * (r2 + 2.0 * xn * xn);
    let ypp = yn * radial + intr.p1 * (r2 + 2.0 * yn * yn) + 2.0 * intr.p2 * xy;

    // d(x'', y'') / d(x', y')
    let dxx = radial + 2.0 * xn * xn * dradial + 2.0 * intr.p1 * yn + 6.0 * intr.p2 * xn;
    let dxy = 2.0 * xn * yn * dradial + 2.0 * intr.p1 * xn + 2.0 * intr.p2 * yn;
    let dyx = 2.0 * xn * yn * dradial + 2.0 * intr.p1 * xn + 2.0 * intr.p2 * yn;
    let dyy = radial + 2.0 * yn * yn * dradial + 6.0 * intr.p1 * yn + 2.0 * intr.p2 * xn;

    let d_norm = Matrix2x3::new(1.0 / z, 0.0, -xn / z, 0.0, 1.0 / z, -yn / z);
    let d_dist = nalgebra::Matrix2::new(intr.fx * dxx, intr.fx * dxy, intr.fy * dyx, intr.fy * dyy);
    let d_point = d_dist * d_norm;

    let mut d_intr = SMatrix::<f64, 2, NUM_INTRINSICS>::zeros();
    d_intr[(0, 0)] = xpp;
    d_intr[(1, 1)] = ypp;
    d_intr[(0, 2)] = 1.0;
    d_intr[(1, 3)] = 1.0;
    let powers = [r2, r4, r6];
    for (i, pw) in powers.iter().enumerate() {
        d_intr[(0, 4 + i)] = intr.fx * xn * pw / den;
        d_intr[(1, 4 + i)] = intr.fy * yn * pw / den;
        d_intr[(0, 7 + i)] = -intr.fx * xn * num * pw / (den * den);
        d_intr[(1, 7 + i)] = -intr.fy * yn * num * pw / (den * den);
    }
    d_intr[(0, 10)] = intr.fx * 2.0 * xy;
    d_intr[(0, 11)] = intr.fx * (r2 + 2.0 * xn * xn);
    d_intr[(1, 10)] = intr.fy * (r2 + 2.0 * yn * yn);
    d_intr[(1, 11)] = intr.fy * 2.0 * xy;

    Ok(ProjectionJacobian {
        pixel: PixelPoint::new(intr.fx * xpp + intr.cx, intr.fy * ypp + intr.cy),
        d_point,
        d_intrinsics: d_intr,
    })
}

/// Closest proper rotation to `m` in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Option<Rotation3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Some(Rotation3::from_matrix_unchecked(u * d * v_t))
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Derivative of `R(w) * p` with respect to the axis-angle vector `w`.
///
/// Uses `d(R p)/dw = -[R p]_x J_l(w)` with the left Jacobian of SO(3).
pub fn rotate_jacobian(axis_angle: &Vector3<f64>, rotated: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = axis_angle.norm_squared();
    let wx = skew(axis_angle);
    let (a, b) = if theta2 < 1e-8 {
        // Taylor expansions of (1 - cos t)/t^2 and (t - sin t)/t^3.
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let jl = Matrix3::identity() + wx * a + wx * wx * b;
    -skew(rotated) * jl
}

/// Chooses the lens whose hemisphere contains `p` and returns full-frame
/// pixel coordinates. Returns `None` when neither lens sees the point or the
/// projection is undefined.
pub fn select_lens(rig: &DualLensRig, p: &WorldPoint) -> Option<(LensId, PixelPoint)> {
    let mut best: Option<(LensId, f64, CameraPoint)> = None;
    for id in LensId::ALL {
        let cam = world_to_camera(&rig.lens(id).pose, p);
        let Ok(sph) = to_spherical(&cam) else {
            continue;
        };
        if sph.theta >= std::f64::consts::FRAC_PI_2 {
            continue;
        }
        // Strict comparison keeps Backside on ties since it is visited first.
        if best.is_none_or(|(_, t, _)| sph.theta < t) {
            best = Some((id, sph.theta, cam));
        }
    }
    let (id, _, cam) = best?;
    let local = distort_project(&rig.lens(id).intrinsics, &cam).ok()?;
    Some((id, rig.to_full_frame(id, local)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn plain() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(800.0, 800.0, 480.0, 540.0)
    }

    #[test]
    fn identity_transform() {
        let c = world_to_camera(&CameraPose::identity(), &WorldPoint::new(1.0, 2.0, 3.0));
        assert_eq!(c.0, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn half_turn_about_z() {
        let pose = CameraPose::from_axis_angle(Vector3::new(0.0, 0.0, PI), Vector3::zeros());
        let c = world_to_camera(&pose, &WorldPoint::new(1.0, 0.0, 0.0));
        assert!((c.0 - Vector3::new(-1.0, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn spherical_axes() {
        let s = to_spherical(&CameraPoint::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((s.r, s.theta, s.phi), (1.0, 0.0, 0.0));
        let s = to_spherical(&CameraPoint::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.r, 1.0);
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15 && s.phi == 0.0);
        let s = to_spherical(&CameraPoint::new(0.0, 2.0, 0.0)).unwrap();
        assert_eq!(s.r, 2.0);
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15 && (s.phi - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(
            to_spherical(&CameraPoint::new(0.0, 0.0, 0.0)),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn azimuth_covers_all_quadrants() {
        let s = to_spherical(&CameraPoint::new(-1.0, -1.0, 0.0)).unwrap();
        assert!((s.phi + 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn pinhole_projection() {
        let p = distort_project(&plain(), &CameraPoint::new(0.0, 0.0, 2000.0)).unwrap();
        assert_eq!((p.u, p.v), (480.0, 540.0));
        let p = distort_project(&plain(), &CameraPoint::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v), (1280.0, 1340.0));
    }

    #[test]
    fn behind_and_degenerate() {
        assert_eq!(
            distort_project(&plain(), &CameraPoint::new(0.0, 0.0, 0.0)),
            Err(GeometryError::BehindCamera)
        );
        assert_eq!(
            distort_project(&plain(), &CameraPoint::new(1.0, 0.0, -5.0)),
            Err(GeometryError::BehindCamera)
        );
        // 1 + k4 r^2 = 0 at r^2 = 1.
        let mut intr = plain();
        intr.k4 = -1.0;
        assert_eq!(
            distort_project(&intr, &CameraPoint::new(1.0, 0.0, 1.0)),
            Err(GeometryError::DegenerateDenominator)
        );
    }

    #[test]
    fn project_behind_lens() {
        let pose = CameraPose::new(Rotation3::identity(), Vector3::new(0.0, 0.0, -100.0));
        assert_eq!(
            project(&plain(), &pose, &WorldPoint::new(0.0, 0.0, 50.0)),
            Err(GeometryError::BehindCamera)
        );
    }

    #[test]
    fn pose_from_matrix_rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert_eq!(
            CameraPose::from_matrix(m, Vector3::zeros()),
            Err(GeometryError::NotARotation)
        );
        assert!(CameraPose::from_matrix(Matrix3::identity(), Vector3::zeros()).is_ok());
    }

    #[test]
    fn lens_names_round_trip() {
        for id in LensId::ALL {
            assert_eq!(id.as_str().parse::<LensId>().unwrap(), id);
        }
        assert!("Frontside".parse::<LensId>().is_err());
    }

    #[test]
    fn small_angle_rotate_jacobian_matches_large_angle_branch() {
        let p = Vector3::new(0.3, -1.2, 2.0);
        let dir = Vector3::new(1.0, -2.0, 3.0).normalize();
        let w_small = dir * 0.9999e-4;
        let w_big = dir * 1.0001e-4;
        let a = rotate_jacobian(&w_small, &(Rotation3::new(w_small) * p));
        let b = rotate_jacobian(&w_big, &(Rotation3::new(w_big) * p));
        assert!((a - b).amax() < 1e-6);
    }

    #[test]
    fn nearest_rotation_fixes_scaled_rotation() {
        let r = Rotation3::new(Vector3::new(0.2, -0.4, 1.1));
        let got = nearest_rotation(&(r.matrix() * 3.5)).unwrap();
        assert!((got.matrix() - r.matrix()).amax() < 1e-12);
    }
}
