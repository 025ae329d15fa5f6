//! Deterministic synthetic data: a dual-lens rig, chessboard views, wand
//! training sets and object trajectories. Used for fixtures and
//! self-checks.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use std::collections::BTreeMap;

use crate::dataio::calib::{write_calibration_json, CalibrationFile};
use crate::dataio::mocap::{write_mocap_csv, MocapRecord};
use crate::dataio::session::{
    write_session_header, LensEntry, MemoryResolver, ObjectEntry, SessionHeader, VideoInfo,
};
use crate::dataio::training::write_training_xml;
use crate::extrinsic::{TrainingPoint, TrainingSet};
use crate::geometry::{
    project, select_lens, world_to_camera, CameraIntrinsics, CameraPose, DualLensRig, LensId,
    LensModel, PixelPoint, WorldPoint,
};
use crate::intrinsic::{BoardSpec, CornerView};
use crate::mapping::ObjectConfig;
use crate::sync::FlashPair;

/// Rational-model coefficients used throughout the synthetic fixtures.
pub fn rational_intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> CameraIntrinsics {
    CameraIntrinsics {
        k1: -0.2,
        k2: 0.05,
        k3: 0.01,
        k4: -0.1,
        k5: 0.02,
        k6: 0.005,
        p1: 1e-3,
        p2: -5e-4,
        ..CameraIntrinsics::pinhole(fx, fy, cx, cy)
    }
}

/// Camera centre of the synthetic rig in world millimetres.
pub const RIG_CENTRE: [f64; 3] = [0.0, 0.0, 1000.0];

/// Two exactly opposed lenses on a tripod at [`RIG_CENTRE`], world +Z up.
/// Backside looks along world +X, Buttonside along world -X.
pub fn dual_lens_rig() -> DualLensRig {
    let centre = Vector3::from(RIG_CENTRE);
    let back_r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let button_r = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0);
    let lens = |r: Matrix3<f64>, intr: CameraIntrinsics| {
        let rot = Rotation3::from_matrix_unchecked(r);
        LensModel {
            intrinsics: intr,
            pose: CameraPose::new(rot, -(rot * centre)),
        }
    };
    DualLensRig::new(
        lens(back_r, rational_intrinsics(110.0, 110.0, 480.0, 540.0)),
        lens(button_r, rational_intrinsics(112.0, 111.0, 478.0, 536.0)),
    )
}

/// Random point whose zenith angle in `pose`'s frame is at most
/// `max_theta` and whose range is in `[min_range, max_range]`.
pub fn random_point_in_cone(
    rng: &mut StdRng,
    pose: &CameraPose,
    max_theta: f64,
    min_range: f64,
    max_range: f64,
) -> WorldPoint {
    let cos_max = max_theta.cos();
    let ct: f64 = rng.random_range(cos_max..1.0);
    let st = (1.0 - ct * ct).sqrt();
    let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let range: f64 = rng.random_range(min_range..max_range);
    let cam = Vector3::new(st * phi.cos(), st * phi.sin(), ct) * range;
    let inv = pose.inverse();
    WorldPoint(inv.rotation * cam + inv.translation)
}

/// A random proper rotation.
pub fn random_rotation(rng: &mut StdRng) -> Rotation3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    Rotation3::new(axis.normalize() * angle)
}

pub fn add_pixel_noise(rng: &mut StdRng, p: PixelPoint, sigma: f64) -> PixelPoint {
    if sigma <= 0.0 {
        return p;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    PixelPoint::new(p.u + n.sample(rng), p.v + n.sample(rng))
}

/// Board poses spread over the field of view. Each pose maps board
/// coordinates into the camera frame.
pub fn board_poses(board: &BoardSpec, count: usize, seed: u64) -> Vec<CameraPose> {
    let mut rng = StdRng::seed_from_u64(seed);
    let w = (board.cols - 1) as f64 * board.square_size;
    let h = (board.rows - 1) as f64 * board.square_size;
    let half = Vector3::new(w / 2.0, h / 2.0, 0.0);
    (0..count)
        .map(|i| {
            let tilt = Vector3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.4..0.4),
            );
            let rot = Rotation3::new(tilt);
            // Walk the board centre around the image so corners span a wide
            // range of radii.
            let angle = i as f64 / count as f64 * std::f64::consts::TAU;
            let reach = if i % 2 == 0 { 0.45 } else { 0.15 };
            let depth = rng.random_range(280.0..360.0);
            let centre = Vector3::new(
                angle.cos() * reach * depth,
                angle.sin() * reach * depth,
                depth,
            );
            CameraPose::new(rot, centre - rot * half)
        })
        .collect()
}

/// Projects a board through `intr` for each pose, with optional pixel noise.
pub fn corner_views(
    intr: &CameraIntrinsics,
    board: &BoardSpec,
    poses: &[CameraPose],
    noise_sigma: f64,
    seed: u64,
) -> Vec<CornerView> {
    let mut rng = StdRng::seed_from_u64(seed);
    let pts = board.board_points();
    poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let image: Vec<PixelPoint> = pts
                .iter()
                .map(|p| {
                    let px = project(intr, pose, p).expect("synthetic board in front of lens");
                    add_pixel_noise(&mut rng, px, noise_sigma)
                })
                .collect();
            CornerView::from_image_points(format!("view{i:02}"), board, &image)
        })
        .collect()
}

/// Wand training points for one lens: random world points within
/// `max_theta` of the lens axis, projected with optional noise.
pub fn training_set(
    lens: LensId,
    session: &str,
    model: &LensModel,
    count: usize,
    noise_sigma: f64,
    seed: u64,
) -> TrainingSet {
    let mut rng = StdRng::seed_from_u64(seed);
    let max_theta = 55f64.to_radians();
    let points = (0..count)
        .map(|i| {
            let world = random_point_in_cone(&mut rng, &model.pose, max_theta, 1500.0, 4500.0);
            let px = project(&model.intrinsics, &model.pose, &world).expect("point in cone");
            TrainingPoint {
                frame: 10 * i as u64,
                image: add_pixel_noise(&mut rng, px, noise_sigma),
                world,
                lens,
            }
        })
        .collect();
    TrainingSet {
        lens,
        session: session.to_string(),
        points,
    }
}

/// Mocap records for an object circling the rig on the floor. The circle
/// passes through both hemispheres so the object changes lens.
pub fn circling_object(
    frames: std::ops::RangeInclusive<u64>,
    radius: f64,
    phase: f64,
    markers: u32,
) -> Vec<MocapRecord> {
    let (start, end) = (*frames.start(), *frames.end());
    let span = (end - start).max(1) as f64;
    frames
        .map(|frame| {
            let a = phase + (frame - start) as f64 / span * std::f64::consts::TAU;
            MocapRecord {
                frame,
                timestamp: frame as f64 / 40.0,
                x: radius * a.cos(),
                y: radius * a.sin(),
                z: 150.0,
                pitch: 0.0,
                roll: 0.0,
                yaw: a.to_degrees(),
                markers,
                sync: 0,
            }
        })
        .collect()
}

/// Whether `p` maps through the rig at all (for fixture sanity checks).
pub fn visible(rig: &DualLensRig, p: &WorldPoint) -> bool {
    select_lens(rig, p).is_some()
}

/// The point on `lens`'s optical axis at `range` mm.
pub fn on_axis(rig: &DualLensRig, lens: LensId, range: f64) -> WorldPoint {
    let inv = rig.lens(lens).pose.inverse();
    let p = inv.rotation * Vector3::new(0.0, 0.0, range) + inv.translation;
    debug_assert!(world_to_camera(&rig.lens(lens).pose, &WorldPoint(p)).0.z > 0.0);
    WorldPoint(p)
}

/// A complete session on disk or in memory: header plus referenced files.
#[derive(Debug, Clone)]
pub struct SessionFiles {
    pub header: SessionHeader,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl SessionFiles {
    pub fn header_bytes(&self) -> Vec<u8> {
        write_session_header(&self.header)
    }

    pub fn resolver(&self) -> MemoryResolver {
        let mut r = MemoryResolver::default();
        for (k, v) in &self.files {
            r.insert(k.clone(), v.clone());
        }
        r
    }

    /// Writes `session.xml` and every referenced file under `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<std::path::PathBuf> {
        for (k, v) in &self.files {
            let path = dir.join(k);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, v)?;
        }
        let header = dir.join("session.xml");
        std::fs::write(&header, self.header_bytes())?;
        Ok(header)
    }
}

/// Session over [`dual_lens_rig`] with noiseless training sets, two objects
/// circling the rig and flashes at video 36 / mocap 100 and video 362 /
/// mocap 969. Poses are left to be estimated from training.
pub fn synthetic_session(seed: u64) -> SessionFiles {
    let rig = dual_lens_rig();
    let mut files = BTreeMap::new();
    let mut lenses = Vec::new();
    for (i, lens) in LensId::ALL.into_iter().enumerate() {
        let model = rig.lens(lens);
        let name = lens.as_str().to_ascii_lowercase();
        let calib = CalibrationFile {
            intrinsics: model.intrinsics,
            rms_error: 0.0,
            views: Vec::new(),
            converged: true,
            iterations: 0,
        };
        let intr_ref = format!("{name}_intrinsics.json");
        files.insert(intr_ref.clone(), write_calibration_json(&calib));
        let ts = training_set(lens, "synthetic", model, 24, 0.0, seed + i as u64);
        let train_ref = format!("{name}_training.xml");
        files.insert(train_ref.clone(), write_training_xml(&ts));
        lenses.push(LensEntry {
            lens,
            intrinsics: intr_ref,
            training: train_ref,
            pose: None,
        });
    }
    let objects = [("EE1", "01", 2500.0, 0.0, 5), ("EE2", "02", 3200.0, 1.7, 4)]
        .into_iter()
        .map(|(name, id, radius, phase, markers)| {
            let mocap = format!("{}.csv", name.to_ascii_lowercase());
            files.insert(
                mocap.clone(),
                write_mocap_csv(&circling_object(100..=969, radius, phase, markers)),
            );
            ObjectEntry {
                config: ObjectConfig {
                    name: name.into(),
                    id: id.into(),
                    visible_max: markers,
                    box_width: 63,
                    box_height: 74,
                },
                mocap,
            }
        })
        .collect();
    SessionFiles {
        header: SessionHeader {
            id: "synthetic".into(),
            video: VideoInfo::default(),
            lenses,
            wand: None,
            objects,
            flashes: vec![FlashPair::new(36, 100), FlashPair::new(362, 969)],
            range: None,
        },
        files,
    }
}
