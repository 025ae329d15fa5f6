//! Maps mocap object positions into per-frame ground-truth annotations.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::groundtruth::{BoxInfo, GroundTruthFrame, GroundTruthObject, IntPixel};
use crate::dataio::mocap::MocapRecord;
use crate::dataio::session::Session;
use crate::extrinsic::{estimate_pose, PoseError, PoseEstimate};
use crate::geometry::{select_lens, DualLensRig, LensId, LensModel};
use crate::lm::LmOptions;
use crate::sync::{build_sync, video_to_mocap, SyncError, SyncModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("invalid object config: {0}")]
    InvalidConfig(String),
    #[error("frame range start {start} exceeds end {end}")]
    InvalidRange { start: u64, end: u64 },
    #[error("session needs two flash anchors, found {0}")]
    MissingAnchors(usize),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("{lens} pose: {source}")]
    Pose { lens: LensId, source: PoseError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub name: String,
    pub id: String,
    /// Number of markers in the object's constellation.
    pub visible_max: u32,
    pub box_width: i64,
    pub box_height: i64,
}

impl ObjectConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.visible_max < 1 {
            return Err(format!("{}: visibleMax must be at least 1", self.name));
        }
        if self.box_width <= 0 || self.box_height <= 0 {
            return Err(format!("{}: box dimensions must be positive", self.name));
        }
        Ok(())
    }
}

/// Box of the configured size centred on the centroid.
pub fn make_boxinfo(centroid: IntPixel, cfg: &ObjectConfig) -> BoxInfo {
    BoxInfo {
        x: centroid.x - cfg.box_width.div_euclid(2),
        y: centroid.y - cfg.box_height.div_euclid(2),
        width: cfg.box_width,
        height: cfg.box_height,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectStream {
    pub config: ObjectConfig,
    /// Sorted by frame.
    pub records: Vec<MocapRecord>,
}

impl ObjectStream {
    pub fn record(&self, frame: u64) -> Option<&MocapRecord> {
        self.records
            .binary_search_by_key(&frame, |r| r.frame)
            .ok()
            .map(|i| &self.records[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingRun {
    pub rig: DualLensRig,
    pub sync: SyncModel,
    pub streams: Vec<ObjectStream>,
    pub start: u64,
    pub end: u64,
    /// Sorted union of frame numbers over all streams.
    timeline: Vec<u64>,
}

impl MappingRun {
    pub fn new(
        rig: DualLensRig,
        sync: SyncModel,
        streams: Vec<ObjectStream>,
        start: u64,
        end: u64,
    ) -> Result<Self, MappingError> {
        if start > end {
            return Err(MappingError::InvalidRange { start, end });
        }
        let mut seen = HashSet::new();
        let mut streams = streams;
        for s in &mut streams {
            s.config.validate().map_err(MappingError::InvalidConfig)?;
            if !seen.insert((s.config.name.clone(), s.config.id.clone())) {
                return Err(MappingError::InvalidConfig(format!(
                    "object {} ({}) configured twice",
                    s.config.name, s.config.id
                )));
            }
            s.records.sort_by_key(|r| r.frame);
            s.records.dedup_by_key(|r| r.frame);
        }
        let mut timeline: Vec<u64> = streams
            .iter()
            .flat_map(|s| s.records.iter().map(|r| r.frame))
            .collect();
        timeline.sort_unstable();
        timeline.dedup();
        Ok(Self {
            rig,
            sync,
            streams,
            start,
            end,
            timeline,
        })
    }

    pub fn timeline(&self) -> &[u64] {
        &self.timeline
    }

    /// Mocap frame used for video frame `v`.
    pub fn mocap_frame(&self, v: u64) -> Option<u64> {
        video_to_mocap(&self.sync, v, &self.timeline).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Emitted(LensId),
    /// The stream has no record at the synced mocap frame.
    NoRecord,
    /// Neither lens hemisphere contains the object.
    NoLens,
    /// The projection lands outside its lens's half of the frame.
    OffImage,
}

fn map_frame_with_outcomes(run: &MappingRun, v: u64) -> (GroundTruthFrame, Vec<Outcome>) {
    let mut frame = GroundTruthFrame::new(v);
    let target = run.mocap_frame(v);
    let half = run.rig.half_width as i64;
    let height = run.rig.frame_height as i64;
    let outcomes = run
        .streams
        .iter()
        .map(|s| {
            let Some(rec) = target.and_then(|f| s.record(f)) else {
                return Outcome::NoRecord;
            };
            let Some((lens, px)) = select_lens(&run.rig, &rec.position()) else {
                return Outcome::NoLens;
            };
            let centroid = IntPixel::round(px.u, px.v);
            let lo = match lens {
                LensId::Backside => 0,
                LensId::Buttonside => half,
            };
            if centroid.x < lo || centroid.x >= lo + half || centroid.y < 0 || centroid.y >= height
            {
                return Outcome::OffImage;
            }
            frame.objects.push(GroundTruthObject {
                name: s.config.name.clone(),
                id: s.config.id.clone(),
                lens,
                centroid,
                boxinfo: make_boxinfo(centroid, &s.config),
                visible: rec.markers.min(s.config.visible_max),
                visible_max: s.config.visible_max,
            });
            Outcome::Emitted(lens)
        })
        .collect();
    (frame, outcomes)
}

/// Annotations for one video frame. Objects without a record, without a
/// lens, or projecting off their half image are left out.
pub fn map_frame(run: &MappingRun, v: u64) -> GroundTruthFrame {
    map_frame_with_outcomes(run, v).0
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub name: String,
    pub id: String,
    pub emitted: usize,
    pub no_record: usize,
    pub no_lens: usize,
    pub off_image: usize,
    pub lens_crossings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub objects: Vec<ObjectSummary>,
}

impl RunSummary {
    pub fn stream_gaps(&self) -> usize {
        self.objects.iter().map(|o| o.no_record).sum()
    }
}

pub fn map_video(run: &MappingRun) -> (Vec<GroundTruthFrame>, RunSummary) {
    let mut summary = RunSummary {
        frames: 0,
        objects: run
            .streams
            .iter()
            .map(|s| ObjectSummary {
                name: s.config.name.clone(),
                id: s.config.id.clone(),
                ..ObjectSummary::default()
            })
            .collect(),
    };
    let mut last_lens: Vec<Option<LensId>> = vec![None; run.streams.len()];
    let mut frames = Vec::with_capacity((run.end - run.start + 1) as usize);
    for v in run.start..=run.end {
        let (frame, outcomes) = map_frame_with_outcomes(run, v);
        for (i, o) in outcomes.into_iter().enumerate() {
            let s = &mut summary.objects[i];
            match o {
                Outcome::Emitted(lens) => {
                    s.emitted += 1;
                    if last_lens[i].is_some_and(|prev| prev != lens) {
                        s.lens_crossings += 1;
                    }
                    last_lens[i] = Some(lens);
                }
                Outcome::NoRecord => s.no_record += 1,
                Outcome::NoLens => s.no_lens += 1,
                Outcome::OffImage => s.off_image += 1,
            }
        }
        frames.push(frame);
        summary.frames += 1;
    }
    (frames, summary)
}

/// Lens poses for a session: pose files where given, otherwise estimated
/// from the lens's training set.
pub fn session_poses(
    session: &Session,
    opts: &LmOptions,
) -> Result<BTreeMap<LensId, (LensModel, Option<PoseEstimate>)>, MappingError> {
    let mut out = BTreeMap::new();
    for lens in LensId::ALL {
        let intr = session.intrinsics[&lens];
        let entry = match session.poses.get(&lens) {
            Some(pose) => (
                LensModel {
                    intrinsics: intr,
                    pose: *pose,
                },
                None,
            ),
            None => {
                let est = estimate_pose(&session.training[&lens], lens, &intr, opts)
                    .map_err(|source| MappingError::Pose { lens, source })?;
                (
                    LensModel {
                        intrinsics: intr,
                        pose: est.pose,
                    },
                    Some(est),
                )
            }
        };
        out.insert(lens, entry);
    }
    Ok(out)
}

pub fn session_sync(session: &Session) -> Result<SyncModel, MappingError> {
    match session.header.flashes.as_slice() {
        [a, b] => Ok(build_sync(*a, *b)?),
        other => Err(MappingError::MissingAnchors(other.len())),
    }
}

/// Builds a mapping run for a loaded session with the given lens models.
/// The frame range defaults to the span between the two flashes.
pub fn build_run(
    session: &Session,
    backside: LensModel,
    buttonside: LensModel,
) -> Result<MappingRun, MappingError> {
    let mut rig = DualLensRig::new(backside, buttonside);
    rig.frame_width = session.header.video.width;
    rig.frame_height = session.header.video.height;
    rig.half_width = session.header.video.width / 2;
    let sync = session_sync(session)?;
    let (start, end) = session
        .header
        .range
        .unwrap_or((sync.first.video_frame, sync.second.video_frame));
    let streams = session
        .streams
        .iter()
        .map(|(config, records)| ObjectStream {
            config: config.clone(),
            records: records.clone(),
        })
        .collect();
    MappingRun::new(rig, sync, streams, start, end)
}

/// [`build_run`] with poses from [`session_poses`].
pub fn run_from_session(session: &Session, opts: &LmOptions) -> Result<MappingRun, MappingError> {
    let poses = session_poses(session, opts)?;
    build_run(
        session,
        poses[&LensId::Backside].0,
        poses[&LensId::Buttonside].0,
    )
}
