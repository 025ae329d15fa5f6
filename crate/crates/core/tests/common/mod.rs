//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::rngs::StdRng;
use rand::Rng;

use omnigt::geometry::{CameraIntrinsics, CameraPose, DualLensRig, LensId};
use omnigt::lm::LeastSquaresProblem;

/// Rational-model projection written out term by term from the model
/// definition, without sharing any code with the library.
#[allow(clippy::too_many_arguments)]
pub fn scalar_project(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    k: [f64; 6],
    p1: f64,
    p2: f64,
    x: f64,
    y: f64,
    z: f64,
) -> (f64, f64) {
    let xp = x / z;
    let yp = y / z;
    let r2 = xp * xp + yp * yp;
    let num = 1.0 + r2 * (k[0] + r2 * (k[1] + r2 * k[2]));
    let den = 1.0 + r2 * (k[3] + r2 * (k[4] + r2 * k[5]));
    let q = num / den;
    let xpp = xp * q + 2.0 * p1 * xp * yp + p2 * (r2 + 2.0 * xp * xp);
    let ypp = yp * q + p1 * (r2 + 2.0 * yp * yp) + 2.0 * p2 * xp * yp;
    (fx * xpp + cx, fy * ypp + cy)
}

pub fn scalar_project_intr(intr: &CameraIntrinsics, x: f64, y: f64, z: f64) -> (f64, f64) {
    scalar_project(
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        [intr.k1, intr.k2, intr.k3, intr.k4, intr.k5, intr.k6],
        intr.p1,
        intr.p2,
        x,
        y,
        z,
    )
}

/// Applies a pose as an explicit 3x3 product plus translation.
pub fn scalar_transform(pose: &CameraPose, p: [f64; 3]) -> [f64; 3] {
    let m = pose.rotation.matrix();
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[(i, 0)] * p[0] + m[(i, 1)] * p[1] + m[(i, 2)] * p[2] + pose.translation[i];
    }
    out
}

/// Lens choice and full-frame pixel for a world point: zenith angle per lens
/// from the raw coordinates, smaller angle wins, Backside on ties.
pub fn scalar_select(rig: &DualLensRig, p: [f64; 3]) -> Option<(LensId, f64, f64)> {
    let mut best: Option<(LensId, f64, [f64; 3])> = None;
    for lens in [LensId::Backside, LensId::Buttonside] {
        let c = scalar_transform(&rig.lens(lens).pose, p);
        let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if r == 0.0 {
            continue;
        }
        let theta = (c[2] / r).clamp(-1.0, 1.0).acos();
        if theta >= std::f64::consts::FRAC_PI_2 {
            continue;
        }
        match best {
            Some((_, t, _)) if t <= theta => {}
            _ => best = Some((lens, theta, c)),
        }
    }
    let (lens, _, c) = best?;
    let (u, v) = scalar_project_intr(&rig.lens(lens).intrinsics, c[0], c[1], c[2]);
    let offset = if lens == LensId::Buttonside {
        rig.half_width as f64
    } else {
        0.0
    };
    Some((lens, u + offset, v))
}

/// Nearest frame by exhaustive scan over exact rationals, ties to the later
/// frame.
pub fn brute_nearest(anchors: [(u64, u64); 2], v: u64, timeline: &[u64]) -> u64 {
    let [(v1, m1), (v2, m2)] = anchors;
    let den = v2 as i128 - v1 as i128;
    let num = m1 as i128 * den + (v as i128 - v1 as i128) * (m2 as i128 - m1 as i128);
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let mut best = timeline[0];
    let mut best_d = (best as i128 * den - num).abs();
    for &f in timeline {
        let d = (f as i128 * den - num).abs();
        if d < best_d || (d == best_d && f > best) {
            best = f;
            best_d = d;
        }
    }
    best
}

/// Random intrinsics with coefficients around the synthetic fixture values.
pub fn random_rational_intrinsics(rng: &mut StdRng) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: rng.random_range(90.0..600.0),
        fy: rng.random_range(90.0..600.0),
        cx: rng.random_range(400.0..560.0),
        cy: rng.random_range(480.0..600.0),
        k1: rng.random_range(-0.3..-0.1),
        k2: rng.random_range(0.0..0.1),
        k3: rng.random_range(0.0..0.02),
        k4: rng.random_range(-0.15..-0.05),
        k5: rng.random_range(0.0..0.04),
        k6: rng.random_range(0.0..0.01),
        p1: rng.random_range(-2e-3..2e-3),
        p2: rng.random_range(-2e-3..2e-3),
    }
}

/// Mean and sample standard deviation by direct summation.
pub fn brute_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Largest column-wise relative difference between an analytic Jacobian and
/// central differences. Columns that are zero in both are skipped.
pub fn jacobian_mismatch<P: LeastSquaresProblem>(problem: &P, params: &DVector<f64>) -> f64
where
    P::Error: std::fmt::Debug,
{
    let analytic = problem.jacobian(params).expect("analytic jacobian");
    let steps = params.map(|p| 1e-6 * p.abs().max(1e-2));
    let numeric: DMatrix<f64> =
        omnigt::lm::numeric_jacobian(problem, params, &steps).expect("numeric jacobian");
    let mut worst: f64 = 0.0;
    for j in 0..params.len() {
        let a = analytic.column(j);
        let n = numeric.column(j);
        let scale = a.norm().max(n.norm());
        if scale == 0.0 {
            continue;
        }
        worst = worst.max((a - n).norm() / scale);
    }
    worst
}

pub fn rotation_error(a: &CameraPose, b: &CameraPose) -> f64 {
    let m = a.rotation.matrix().transpose() * b.rotation.matrix();
    let s = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
    .norm();
    (0.5 * s).atan2(0.5 * (m.trace() - 1.0))
}

pub fn non_increasing(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0])
}
