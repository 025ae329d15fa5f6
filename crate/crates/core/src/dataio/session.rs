//! Session header XML and the in-memory session aggregate.
//!
//! ```xml
//! <session id="S1">
//!   <video fps="15" width="1920" height="1080" frames="frames"/>
//!   <lens id="Backside" intrinsics="calib/backside.json" training="training/backside.xml"/>
//!   <lens id="Buttonside" intrinsics="calib/buttonside.json" training="training/buttonside.xml"/>
//!   <wand mocap="mocap/wand.csv"/>
//!   <object name="EE1" id="01" mocap="mocap/EE1.csv" visibleMax="5" boxWidth="63" boxHeight="74"/>
//!   <flash video="36" mocap="100"/>
//!   <flash video="362" mocap="969"/>
//!   <range start="36" end="362"/>
//! </session>
//! ```
//!
//! File references are relative to the header's directory. `pose` on a lens,
//! `frames`, `wand` and `range` are optional.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::calib::{parse_intrinsics_json, parse_pose_json};
use super::mocap::{parse_mocap_csv, MocapRecord};
use super::training::parse_training_xml;
use super::xml::{escape, parse_document};
use super::DataError;
use crate::extrinsic::TrainingSet;
use crate::geometry::{CameraIntrinsics, CameraPose, LensId, FRAME_HEIGHT, FRAME_WIDTH};
use crate::mapping::ObjectConfig;
use crate::sync::FlashPair;

/// Source of the files a session header refers to.
pub trait FileResolver {
    fn read(&self, reference: &str) -> std::io::Result<Vec<u8>>;
}

/// Resolves references against a directory.
#[derive(Debug, Clone)]
pub struct DirResolver {
    pub root: PathBuf,
}

impl DirResolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, reference: &str) -> PathBuf {
        self.root.join(reference)
    }
}

impl FileResolver for DirResolver {
    fn read(&self, reference: &str) -> std::io::Result<Vec<u8>> {
        std::fs::read(self.path(reference))
    }
}

/// In-memory files, keyed by reference.
#[derive(Debug, Clone, Default)]
pub struct MemoryResolver {
    pub files: HashMap<String, Vec<u8>>,
}

impl MemoryResolver {
    pub fn insert(&mut self, reference: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(reference.into(), bytes);
    }
}

impl FileResolver for MemoryResolver {
    fn read(&self, reference: &str) -> std::io::Result<Vec<u8>> {
        self.files
            .get(reference)
            .cloned()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "not in memory"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Directory of pre-extracted numbered frame images.
    pub frames: Option<String>,
}

impl Default for VideoInfo {
    fn default() -> Self {
        Self {
            fps: 15.0,
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensEntry {
    pub lens: LensId,
    pub intrinsics: String,
    pub training: String,
    pub pose: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub config: ObjectConfig,
    pub mocap: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub id: String,
    pub video: VideoInfo,
    /// Exactly one entry per lens, Backside first.
    pub lenses: Vec<LensEntry>,
    pub wand: Option<String>,
    pub objects: Vec<ObjectEntry>,
    pub flashes: Vec<FlashPair>,
    pub range: Option<(u64, u64)>,
}

impl SessionHeader {
    pub fn lens(&self, id: LensId) -> Option<&LensEntry> {
        self.lenses.iter().find(|l| l.lens == id)
    }
}

pub fn parse_session_header(bytes: &[u8]) -> Result<SessionHeader, DataError> {
    let root = parse_document(bytes)?;
    root.expect_name("session", "session")?;
    let mut header = SessionHeader {
        id: root.require("session", "id")?.to_string(),
        video: VideoInfo::default(),
        lenses: Vec::new(),
        wand: None,
        objects: Vec::new(),
        flashes: Vec::new(),
        range: None,
    };
    let mut saw_video = false;
    for (i, el) in root.children.iter().enumerate() {
        let path = format!("session/{}[{i}]", el.name);
        match el.name.as_str() {
            "video" => {
                if saw_video {
                    return Err(DataError::schema(path, "repeated <video>"));
                }
                saw_video = true;
                header.video = VideoInfo {
                    fps: el.parse_opt(&path, "fps")?.unwrap_or(15.0),
                    width: el.parse_opt(&path, "width")?.unwrap_or(FRAME_WIDTH),
                    height: el.parse_opt(&path, "height")?.unwrap_or(FRAME_HEIGHT),
                    frames: el.attr("frames").map(str::to_string),
                };
            }
            "lens" => {
                let lens: LensId = el
                    .require(&path, "id")?
                    .parse()
                    .map_err(|e: String| DataError::schema(&path, e))?;
                header.lenses.push(LensEntry {
                    lens,
                    intrinsics: el.require(&path, "intrinsics")?.to_string(),
                    training: el.require(&path, "training")?.to_string(),
                    pose: el.attr("pose").map(str::to_string),
                });
            }
            "wand" => header.wand = Some(el.require(&path, "mocap")?.to_string()),
            "object" => {
                let config = ObjectConfig {
                    name: el.require(&path, "name")?.to_string(),
                    id: el.require(&path, "id")?.to_string(),
                    visible_max: el.parse_attr(&path, "visibleMax")?,
                    box_width: el.parse_attr(&path, "boxWidth")?,
                    box_height: el.parse_attr(&path, "boxHeight")?,
                };
                config.validate().map_err(|m| DataError::schema(&path, m))?;
                header.objects.push(ObjectEntry {
                    config,
                    mocap: el.require(&path, "mocap")?.to_string(),
                });
            }
            "flash" => header.flashes.push(FlashPair {
                video_frame: el.parse_attr(&path, "video")?,
                mocap_frame: el.parse_attr(&path, "mocap")?,
            }),
            "range" => {
                let start: u64 = el.parse_attr(&path, "start")?;
                let end: u64 = el.parse_attr(&path, "end")?;
                if start > end {
                    return Err(DataError::schema(path, "range start exceeds end"));
                }
                header.range = Some((start, end));
            }
            other => return Err(DataError::schema(path, format!("unexpected <{other}>"))),
        }
    }
    let has = |id| header.lenses.iter().filter(|l| l.lens == id).count();
    if header.lenses.len() != 2 || has(LensId::Backside) != 1 || has(LensId::Buttonside) != 1 {
        return Err(DataError::schema(
            "session/lens",
            "the rig requires exactly one Backside and one Buttonside lens entry",
        ));
    }
    header.lenses.sort_by_key(|l| l.lens);
    if header.flashes.len() > 2 {
        return Err(DataError::schema(
            "session/flash",
            "at most two flash anchors",
        ));
    }
    let mut names = std::collections::HashSet::new();
    for o in &header.objects {
        if !names.insert((o.config.name.as_str(), o.config.id.as_str())) {
            return Err(DataError::schema(
                "session/object",
                format!("object {} ({}) listed twice", o.config.name, o.config.id),
            ));
        }
    }
    Ok(header)
}

pub fn write_session_header(h: &SessionHeader) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!("<session id=\"{}\">\n", escape(&h.id)));
    out.push_str(&format!(
        "  <video fps=\"{}\" width=\"{}\" height=\"{}\"",
        h.video.fps, h.video.width, h.video.height
    ));
    if let Some(f) = &h.video.frames {
        out.push_str(&format!(" frames=\"{}\"", escape(f)));
    }
    out.push_str("/>\n");
    for l in &h.lenses {
        out.push_str(&format!(
            "  <lens id=\"{}\" intrinsics=\"{}\" training=\"{}\"",
            l.lens,
            escape(&l.intrinsics),
            escape(&l.training)
        ));
        if let Some(p) = &l.pose {
            out.push_str(&format!(" pose=\"{}\"", escape(p)));
        }
        out.push_str("/>\n");
    }
    if let Some(w) = &h.wand {
        out.push_str(&format!("  <wand mocap=\"{}\"/>\n", escape(w)));
    }
    for o in &h.objects {
        let c = &o.config;
        out.push_str(&format!(
            "  <object name=\"{}\" id=\"{}\" mocap=\"{}\" visibleMax=\"{}\" boxWidth=\"{}\" boxHeight=\"{}\"/>\n",
            escape(&c.name),
            escape(&c.id),
            escape(&o.mocap),
            c.visible_max,
            c.box_width,
            c.box_height
        ));
    }
    for f in &h.flashes {
        out.push_str(&format!(
            "  <flash video=\"{}\" mocap=\"{}\"/>\n",
            f.video_frame, f.mocap_frame
        ));
    }
    if let Some((s, e)) = h.range {
        out.push_str(&format!("  <range start=\"{s}\" end=\"{e}\"/>\n"));
    }
    out.push_str("</session>\n");
    out.into_bytes()
}

/// Everything a session header points at, loaded and parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub header: SessionHeader,
    pub intrinsics: BTreeMap<LensId, CameraIntrinsics>,
    pub training: BTreeMap<LensId, TrainingSet>,
    /// Poses loaded from optional pose files.
    pub poses: BTreeMap<LensId, CameraPose>,
    /// Mocap stream per object, in header order.
    pub streams: Vec<(ObjectConfig, Vec<MocapRecord>)>,
    pub wand: Option<Vec<MocapRecord>>,
}

fn fetch(resolver: &dyn FileResolver, reference: &str) -> Result<Vec<u8>, DataError> {
    resolver
        .read(reference)
        .map_err(|e| DataError::MissingFile {
            reference: reference.to_string(),
            message: e.to_string(),
        })
}

/// Prefixes a nested error path with the file it came from.
fn in_file(reference: &str, e: DataError) -> DataError {
    match e {
        DataError::SchemaViolation { path, message } => DataError::SchemaViolation {
            path: format!("{reference}:{path}"),
            message,
        },
        DataError::MalformedRow { row, message } => DataError::MalformedRow {
            row,
            message: format!("{reference}: {message}"),
        },
        DataError::Json(m) => DataError::Json(format!("{reference}: {m}")),
        other => other,
    }
}

pub fn load_session(
    header_bytes: &[u8],
    resolver: &dyn FileResolver,
) -> Result<Session, DataError> {
    let header = parse_session_header(header_bytes)?;
    let mut intrinsics = BTreeMap::new();
    let mut training = BTreeMap::new();
    let mut poses = BTreeMap::new();
    for l in &header.lenses {
        let intr = parse_intrinsics_json(&fetch(resolver, &l.intrinsics)?)
            .map_err(|e| in_file(&l.intrinsics, e))?;
        intrinsics.insert(l.lens, intr);
        let ts = parse_training_xml(&fetch(resolver, &l.training)?)
            .map_err(|e| in_file(&l.training, e))?;
        if ts.lens != l.lens {
            return Err(DataError::schema(
                format!("{}:training", l.training),
                format!(
                    "training file is for {}, header lists it under {}",
                    ts.lens, l.lens
                ),
            ));
        }
        training.insert(l.lens, ts);
        if let Some(p) = &l.pose {
            let file = parse_pose_json(&fetch(resolver, p)?).map_err(|e| in_file(p, e))?;
            poses.insert(l.lens, file.pose()?);
        }
    }
    let mut streams = Vec::with_capacity(header.objects.len());
    for o in &header.objects {
        let mut records =
            parse_mocap_csv(&fetch(resolver, &o.mocap)?).map_err(|e| in_file(&o.mocap, e))?;
        records.sort_by_key(|r| r.frame);
        streams.push((o.config.clone(), records));
    }
    let wand = match &header.wand {
        Some(w) => {
            let mut records = parse_mocap_csv(&fetch(resolver, w)?).map_err(|e| in_file(w, e))?;
            records.sort_by_key(|r| r.frame);
            Some(records)
        }
        None => None,
    };
    Ok(Session {
        header,
        intrinsics,
        training,
        poses,
        streams,
        wand,
    })
}

pub fn save_session(header: &SessionHeader) -> Vec<u8> {
    write_session_header(header)
}

/// Loads a header file from disk, resolving references next to it.
pub fn load_session_file(path: &Path) -> Result<(Session, DirResolver), DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::MissingFile {
        reference: path.display().to_string(),
        message: e.to_string(),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolver = DirResolver::new(root);
    let session = load_session(&bytes, &resolver)?;
    Ok((session, resolver))
}
