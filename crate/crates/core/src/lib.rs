//! Ground-truth annotation toolkit for a dual-fisheye camera observed by a
//! motion-capture system: lens calibration, pose estimation, stream
//! synchronization, annotation mapping and evaluation.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod evaluation;
pub mod extrinsic;
pub mod geometry;
pub mod intrinsic;
pub mod lm;
pub mod mapping;
pub mod sync;
pub mod synthetic;
