//! JSON API backing the annotation front end.
//!
//! Reads are served from an immutable snapshot behind an `RwLock<Arc<_>>`.
//! Writes are serialized by a mutex, persisted atomically, and then swap in a
//! freshly built snapshot, so a reader never observes a half-applied edit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use omnigt::dataio::calib::{write_pose_json, PoseFile};
use omnigt::dataio::groundtruth::{parse_groundtruth_xml, GroundTruthFrame, GroundTruthObject};
use omnigt::dataio::session::{load_session, save_session, DirResolver, Session};
use omnigt::dataio::training::write_training_xml;
use omnigt::dataio::DataError;
use omnigt::evaluation::{compare, reprojection_errors, ComparisonResult, ReprojectionReport};
use omnigt::extrinsic::{estimate_pose, PoseError, TrainingPoint};
use omnigt::geometry::{LensId, LensModel, PixelPoint, WorldPoint};
use omnigt::lm::LmOptions;
use omnigt::mapping::{build_run, map_video, session_sync, RunSummary};
use omnigt::sync::{build_sync, FlashPair};

use crate::args::ServeArgs;
use crate::error::CliError;
use crate::output::write_atomic;

/// JSON error body `{ "error": kind, "message": text }` with a status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn not_found(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, kind, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message)
    }

    fn data(e: DataError) -> Self {
        let status = match e {
            DataError::MissingFile { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.kind(), e.to_string())
    }

    fn pose(lens: LensId, e: PoseError) -> Self {
        let status = match e {
            PoseError::InsufficientPoints(_) | PoseError::DegenerateConfiguration => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, "PoseError", format!("{lens}: {e}"))
    }

    fn io(e: CliError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "IoError", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Everything derived from one version of the session files.
#[derive(Debug)]
pub struct Snapshot {
    pub session: Session,
    pub lenses: BTreeMap<LensId, LensState>,
    pub mapping: Result<MappedVideo, String>,
}

#[derive(Debug)]
pub struct LensState {
    pub model: Result<LensModel, String>,
    pub report: Option<ReprojectionReport>,
}

#[derive(Debug)]
pub struct MappedVideo {
    pub start: u64,
    pub end: u64,
    pub frames: Vec<GroundTruthFrame>,
    pub summary: RunSummary,
}

impl Snapshot {
    pub fn build(session: Session, opts: &LmOptions) -> Self {
        let mut lenses = BTreeMap::new();
        for lens in LensId::ALL {
            let intr = session.intrinsics[&lens];
            let ts = &session.training[&lens];
            let model = match session.poses.get(&lens) {
                Some(pose) => Ok(LensModel {
                    intrinsics: intr,
                    pose: *pose,
                }),
                None => estimate_pose(ts, lens, &intr, opts)
                    .map(|est| LensModel {
                        intrinsics: intr,
                        pose: est.pose,
                    })
                    .map_err(|e| format!("{lens}: {e}")),
            };
            let report = model
                .as_ref()
                .ok()
                .and_then(|m| reprojection_errors(ts, &m.intrinsics, &m.pose).ok());
            lenses.insert(lens, LensState { model, report });
        }
        let mapping = match (
            &lenses[&LensId::Backside].model,
            &lenses[&LensId::Buttonside].model,
        ) {
            (Ok(back), Ok(button)) => build_run(&session, *back, *button)
                .map(|run| {
                    let (frames, summary) = map_video(&run);
                    MappedVideo {
                        start: run.start,
                        end: run.end,
                        frames,
                        summary,
                    }
                })
                .map_err(|e| e.to_string()),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        Self {
            session,
            lenses,
            mapping,
        }
    }

    fn mapped(&self) -> ApiResult<&MappedVideo> {
        self.mapping
            .as_ref()
            .map_err(|e| ApiError::new(StatusCode::CONFLICT, "MappingUnavailable", e.clone()))
    }
}

pub struct AppState {
    header_path: PathBuf,
    resolver: DirResolver,
    frames_dir: Option<PathBuf>,
    system: Option<PathBuf>,
    opts: LmOptions,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl AppState {
    /// Loads the session behind `header_path` and builds the first snapshot.
    pub fn open(
        header_path: &Path,
        frames_dir: Option<PathBuf>,
        system: Option<PathBuf>,
        opts: LmOptions,
    ) -> Result<Self, CliError> {
        let bytes = crate::output::read_file(header_path)?;
        let root = header_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let resolver = DirResolver::new(root);
        let session =
            load_session(&bytes, &resolver).map_err(|e| CliError::data(header_path, e))?;
        let frames_dir = frames_dir.or_else(|| {
            session
                .header
                .video
                .frames
                .as_ref()
                .map(|f| resolver.path(f))
        });
        let snapshot = Snapshot::build(session, &opts);
        Ok(Self {
            header_path: header_path.to_path_buf(),
            resolver,
            frames_dir,
            system,
            opts,
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    fn install(&self, session: Session) {
        let next = Arc::new(Snapshot::build(session, &self.opts));
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = next;
    }

    fn save(&self, reference: &str, bytes: &[u8]) -> ApiResult<()> {
        write_atomic(&self.resolver.path(reference), bytes).map_err(ApiError::io)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/frames/{n}/image", get(get_frame_image))
        .route("/api/frames/{n}/annotations", get(get_frame_annotations))
        .route("/api/annotations", get(get_annotations))
        .route(
            "/api/training/{lens}",
            get(get_training).post(post_training),
        )
        .route(
            "/api/training/{lens}/{index}",
            axum::routing::delete(delete_training),
        )
        .route("/api/anchors", axum::routing::put(put_anchors))
        .route("/api/pose/{lens}", axum::routing::post(post_pose))
        .route("/api/reports", get(get_reports))
        .route("/api/reports/{lens}", get(get_report))
        .route("/api/comparison", get(get_comparison).post(post_comparison))
        .with_state(state)
}

pub fn serve_blocking(args: &ServeArgs) -> Result<(), CliError> {
    let state = Arc::new(AppState::open(
        &args.session,
        args.frames.clone(),
        args.system.clone(),
        args.lm.options(),
    )?);
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io(Path::new(&addr), e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::io(Path::new(&addr), e))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::io(Path::new(&addr), e))
    })
}

fn parse_lens(s: &str) -> ApiResult<LensId> {
    s.parse()
        .map_err(|_| ApiError::not_found("UnknownLens", format!("no lens named `{s}`")))
}

async fn get_session(State(st): State<Arc<AppState>>) -> Json<Value> {
    let snap = st.snapshot();
    let mapping = match &snap.mapping {
        Ok(m) => json!({ "start": m.start, "end": m.end, "summary": m.summary }),
        Err(e) => json!({ "error": e }),
    };
    let lenses: BTreeMap<String, Value> = snap
        .lenses
        .iter()
        .map(|(lens, s)| {
            let v = match &s.model {
                Ok(m) => json!({
                    "intrinsics": m.intrinsics,
                    "pose": m.pose,
                    "trainingPoints": snap.session.training[lens].points.len(),
                }),
                Err(e) => json!({
                    "error": e,
                    "trainingPoints": snap.session.training[lens].points.len(),
                }),
            };
            (lens.to_string(), v)
        })
        .collect();
    Json(json!({
        "header": snap.session.header,
        "lenses": lenses,
        "mapping": mapping,
        "hasFrames": st.frames_dir.is_some(),
        "hasSystem": st.system.is_some(),
    }))
}

fn image_candidates(dir: &Path, n: u64) -> impl Iterator<Item = PathBuf> + '_ {
    let stems = [format!("{n}"), format!("{n:06}"), format!("frame_{n:06}")];
    stems.into_iter().flat_map(move |s| {
        ["png", "jpg", "jpeg"]
            .into_iter()
            .map(move |ext| dir.join(format!("{s}.{ext}")))
    })
}

async fn get_frame_image(
    State(st): State<Arc<AppState>>,
    UrlPath(n): UrlPath<u64>,
) -> ApiResult<Response> {
    let dir = st
        .frames_dir
        .as_ref()
        .ok_or_else(|| ApiError::not_found("NoFrames", "no frame directory configured"))?;
    for path in image_candidates(dir, n) {
        if let Ok(bytes) = std::fs::read(&path) {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some("png") => "image/png",
                _ => "image/jpeg",
            };
            return Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response());
        }
    }
    Err(ApiError::not_found(
        "FrameNotFound",
        format!("no image for frame {n}"),
    ))
}

fn object_json(o: &GroundTruthObject) -> Value {
    json!({
        "name": o.name,
        "id": o.id,
        "lens": o.lens,
        "centroid": { "x": o.centroid.x, "y": o.centroid.y },
        "boxinfo": {
            "x": o.boxinfo.x,
            "y": o.boxinfo.y,
            "width": o.boxinfo.width,
            "height": o.boxinfo.height,
        },
        "visibility": { "visible": o.visible, "visibleMax": o.visible_max },
    })
}

fn frame_json(f: &GroundTruthFrame) -> Value {
    json!({
        "frame": f.number,
        "objects": f.objects.iter().map(object_json).collect::<Vec<_>>(),
    })
}

async fn get_frame_annotations(
    State(st): State<Arc<AppState>>,
    UrlPath(n): UrlPath<u64>,
) -> ApiResult<Json<Value>> {
    let snap = st.snapshot();
    let m = snap.mapped()?;
    if n < m.start || n > m.end {
        return Err(ApiError::not_found(
            "FrameOutOfRange",
            format!("frame {n} is outside {}..={}", m.start, m.end),
        ));
    }
    let f = &m.frames[(n - m.start) as usize];
    Ok(Json(frame_json(f)))
}

async fn get_annotations(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let snap = st.snapshot();
    let m = snap.mapped()?;
    Ok(Json(json!({
        "start": m.start,
        "end": m.end,
        "frames": m.frames.iter().map(frame_json).collect::<Vec<_>>(),
    })))
}

fn training_json(snap: &Snapshot, lens: LensId) -> Value {
    let ts = &snap.session.training[&lens];
    let points: Vec<Value> = ts
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({
                "index": i,
                "frame": p.frame,
                "u": p.image.u,
                "v": p.image.v,
                "x": p.world.0.x,
                "y": p.world.0.y,
                "z": p.world.0.z,
            })
        })
        .collect();
    json!({ "lens": lens, "session": ts.session, "points": points })
}

async fn get_training(
    State(st): State<Arc<AppState>>,
    UrlPath(lens): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let lens = parse_lens(&lens)?;
    Ok(Json(training_json(&st.snapshot(), lens)))
}

#[derive(Debug, Deserialize)]
pub struct NewTrainingPoint {
    /// Video frame the click was made on.
    pub frame: u64,
    /// Lens-local pixel coordinates.
    pub u: f64,
    pub v: f64,
    /// World position in millimetres; looked up from the wand stream when absent.
    pub world: Option<[f64; 3]>,
}

fn wand_position(session: &Session, video_frame: u64) -> ApiResult<WorldPoint> {
    let wand = session.wand.as_ref().ok_or_else(|| {
        ApiError::bad_request("no wand stream in the session; supply `world` explicitly")
    })?;
    let sync = session_sync(session)
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, "SyncError", e.to_string()))?;
    let frames: Vec<u64> = wand.iter().map(|r| r.frame).collect();
    let mocap = sync
        .video_to_mocap(video_frame, &frames)
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, "SyncError", e.to_string()))?;
    let i = frames
        .binary_search(&mocap)
        .expect("nearest frame is in the list");
    Ok(wand[i].position())
}

/// Applies `edit` to a copy of the session, persists what changed and
/// installs the rebuilt snapshot.
fn edit_training(
    st: &AppState,
    lens: LensId,
    edit: impl FnOnce(&Session, &mut Vec<TrainingPoint>) -> ApiResult<()>,
) -> ApiResult<Arc<Snapshot>> {
    let _guard = st.writer.lock().unwrap_or_else(|p| p.into_inner());
    let mut session = st.snapshot().session.clone();
    let mut points = session.training[&lens].points.clone();
    edit(&session, &mut points)?;
    let ts = session.training.get_mut(&lens).expect("both lenses loaded");
    ts.points = points;
    let reference = session
        .header
        .lens(lens)
        .expect("both lenses listed")
        .training
        .clone();
    st.save(&reference, &write_training_xml(ts))?;
    st.install(session);
    Ok(st.snapshot())
}

async fn post_training(
    State(st): State<Arc<AppState>>,
    UrlPath(lens): UrlPath<String>,
    Json(body): Json<NewTrainingPoint>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let lens = parse_lens(&lens)?;
    let snap = edit_training(&st, lens, |session, points| {
        let video = &session.header.video;
        let half = f64::from(video.width / 2);
        if !(body.u.is_finite() && body.v.is_finite()) {
            return Err(ApiError::bad_request("u and v must be finite"));
        }
        if body.u < 0.0 || body.u >= half || body.v < 0.0 || body.v >= f64::from(video.height) {
            return Err(ApiError::bad_request(format!(
                "({}, {}) is outside the {}x{} lens image",
                body.u, body.v, half, video.height
            )));
        }
        let world = match body.world {
            Some([x, y, z]) if x.is_finite() && y.is_finite() && z.is_finite() => {
                WorldPoint::new(x, y, z)
            }
            Some(_) => return Err(ApiError::bad_request("world coordinates must be finite")),
            None => wand_position(session, body.frame)?,
        };
        points.push(TrainingPoint {
            frame: body.frame,
            image: PixelPoint::new(body.u, body.v),
            world,
            lens,
        });
        Ok(())
    })?;
    let mut out = training_json(&snap, lens);
    out["index"] = json!(snap.session.training[&lens].points.len() - 1);
    Ok((StatusCode::CREATED, Json(out)))
}

async fn delete_training(
    State(st): State<Arc<AppState>>,
    UrlPath((lens, index)): UrlPath<(String, usize)>,
) -> ApiResult<Json<Value>> {
    let lens = parse_lens(&lens)?;
    let snap = edit_training(&st, lens, |_, points| {
        if index >= points.len() {
            return Err(ApiError::not_found(
                "PointNotFound",
                format!(
                    "{lens} has {} training points, no index {index}",
                    points.len()
                ),
            ));
        }
        points.remove(index);
        Ok(())
    })?;
    Ok(Json(training_json(&snap, lens)))
}

#[derive(Debug, Deserialize)]
pub struct AnchorUpdate {
    pub flashes: Vec<FlashPair>,
    #[serde(default)]
    pub range: Option<(u64, u64)>,
}

async fn put_anchors(
    State(st): State<Arc<AppState>>,
    Json(body): Json<AnchorUpdate>,
) -> ApiResult<Json<Value>> {
    let [a, b] = body.flashes[..] else {
        return Err(ApiError::bad_request(format!(
            "exactly two flash anchors are required, got {}",
            body.flashes.len()
        )));
    };
    build_sync(a, b).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let Some((s, e)) = body.range {
        if s > e {
            return Err(ApiError::bad_request(format!(
                "range start {s} is after end {e}"
            )));
        }
    }
    let snap = {
        let _guard = st.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut session = st.snapshot().session.clone();
        session.header.flashes = vec![a, b];
        session.header.range = body.range;
        write_atomic(&st.header_path, &save_session(&session.header)).map_err(ApiError::io)?;
        st.install(session);
        st.snapshot()
    };
    let mapping = match &snap.mapping {
        Ok(m) => json!({ "start": m.start, "end": m.end }),
        Err(e) => json!({ "error": e }),
    };
    Ok(Json(json!({
        "flashes": snap.session.header.flashes,
        "range": snap.session.header.range,
        "mapping": mapping,
    })))
}

#[derive(Debug, Serialize)]
struct PoseResponse {
    pose: PoseFile,
    report: ReprojectionReport,
    saved: Option<String>,
}

async fn post_pose(
    State(st): State<Arc<AppState>>,
    UrlPath(lens): UrlPath<String>,
) -> ApiResult<Json<PoseResponse>> {
    let lens = parse_lens(&lens)?;
    let _guard = st.writer.lock().unwrap_or_else(|p| p.into_inner());
    let mut session = st.snapshot().session.clone();
    let ts = &session.training[&lens];
    let est = estimate_pose(ts, lens, &session.intrinsics[&lens], &st.opts)
        .map_err(|e| ApiError::pose(lens, e))?;
    let file = PoseFile::new(lens, &ts.session, &est);
    let saved = session.header.lens(lens).and_then(|l| l.pose.clone());
    if let Some(reference) = &saved {
        st.save(reference, &write_pose_json(&file))?;
    }
    session.poses.insert(lens, est.pose);
    st.install(session);
    Ok(Json(PoseResponse {
        pose: file,
        report: est.report,
        saved,
    }))
}

fn report_json(snap: &Snapshot, lens: LensId) -> Value {
    let s = &snap.lenses[&lens];
    match (&s.model, &s.report) {
        (Ok(_), Some(r)) => serde_json::to_value(r).expect("report serializes"),
        (Err(e), _) => json!({ "error": e }),
        (Ok(_), None) => json!({ "error": "training set is empty" }),
    }
}

async fn get_reports(State(st): State<Arc<AppState>>) -> Json<Value> {
    let snap = st.snapshot();
    let map: BTreeMap<String, Value> = LensId::ALL
        .into_iter()
        .map(|l| (l.to_string(), report_json(&snap, l)))
        .collect();
    Json(json!(map))
}

async fn get_report(
    State(st): State<Arc<AppState>>,
    UrlPath(lens): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let lens = parse_lens(&lens)?;
    Ok(Json(report_json(&st.snapshot(), lens)))
}

#[derive(Debug, Deserialize)]
pub struct CompareQuery {
    #[serde(default = "one", rename = "minVisible")]
    pub min_visible: u32,
}

fn one() -> u32 {
    1
}

fn comparison(
    st: &AppState,
    system: &[GroundTruthFrame],
    min_visible: u32,
) -> ApiResult<ComparisonResult> {
    let snap = st.snapshot();
    Ok(compare(&snap.mapped()?.frames, system, min_visible))
}

async fn get_comparison(
    State(st): State<Arc<AppState>>,
    Query(q): Query<CompareQuery>,
) -> ApiResult<Json<ComparisonResult>> {
    let path = st
        .system
        .as_ref()
        .ok_or_else(|| ApiError::not_found("NoSystemOutput", "no tracker output configured"))?;
    let bytes = std::fs::read(path).map_err(|e| ApiError::io(CliError::io(path, e)))?;
    let system = parse_groundtruth_xml(&bytes).map_err(ApiError::data)?;
    Ok(Json(comparison(&st, &system, q.min_visible)?))
}

async fn post_comparison(
    State(st): State<Arc<AppState>>,
    Query(q): Query<CompareQuery>,
    body: Bytes,
) -> ApiResult<Json<ComparisonResult>> {
    let system = parse_groundtruth_xml(&body).map_err(ApiError::data)?;
    Ok(Json(comparison(&st, &system, q.min_visible)?))
}
