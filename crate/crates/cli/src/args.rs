use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use omnigt::lm::LmOptions;

#[derive(Debug, Parser)]
#[command(
    name = "omnigt",
    version,
    about = "Mocap-to-fisheye ground-truth annotation tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate one lens from chessboard corner views.
    Calibrate(CalibrateArgs),
    /// Estimate a lens pose from wand training points.
    Pose(PoseArgs),
    /// Print flash-anchor diagnostics for a session.
    SyncCheck(SyncCheckArgs),
    /// Map a session's mocap streams to ground-truth annotation XML.
    Map(MapArgs),
    /// Re-projection error table and error map.
    Stats(StatsArgs),
    /// Compare tracker output against ground truth.
    Compare(CompareArgs),
    /// Serve the JSON API for a session.
    Serve(ServeArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive finite number, got {s}"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct LmArgs {
    /// Iteration budget for the Levenberg-Marquardt solver (1-100000).
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..=100_000))]
    pub max_iterations: u64,
    /// Relative cost-change stopping tolerance.
    #[arg(long, default_value_t = 1e-12, value_parser = positive_f64)]
    pub tolerance: f64,
}

impl LmArgs {
    pub fn options(&self) -> LmOptions {
        LmOptions {
            max_iterations: self.max_iterations as usize,
            relative_tolerance: self.tolerance,
            ..LmOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Corner CSV (`view,u,v`).
    #[arg(long)]
    pub corners: PathBuf,
    /// Inner corners per board row (3-1000).
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u32).range(3..=1000))]
    pub cols: u32,
    /// Inner corners per board column (3-1000).
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(3..=1000))]
    pub rows: u32,
    /// Square side in millimetres.
    #[arg(long, default_value_t = 35.3, value_parser = positive_f64)]
    pub square: f64,
    /// Calibration JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lm: LmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PoseArgs {
    /// Training XML for one lens.
    #[arg(long)]
    pub training: PathBuf,
    /// Intrinsics or calibration JSON for the same lens.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Pose JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Re-projection report JSON to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub lm: LmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SyncCheckArgs {
    /// Session header XML.
    #[arg(long)]
    pub session: PathBuf,
    /// Video frames to look up (repeatable).
    #[arg(long = "frame")]
    pub frames: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    /// Session header XML.
    #[arg(long)]
    pub session: PathBuf,
    /// Ground-truth XML to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Run summary JSON to write.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// First video frame (defaults to the session range).
    #[arg(long)]
    pub start: Option<u64>,
    /// Last video frame (defaults to the session range).
    #[arg(long)]
    pub end: Option<u64>,
    #[command(flatten)]
    pub lm: LmArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["session", "training"])))]
pub struct StatsArgs {
    /// Session header XML; reports both lenses.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Training XML for a single lens.
    #[arg(long, requires_all = ["intrinsics", "pose"])]
    pub training: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Pose JSON for the single lens.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Text table to write (always printed).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error-map CSV to write.
    #[arg(long)]
    pub error_map: Option<PathBuf>,
    #[command(flatten)]
    pub lm: LmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Ground-truth XML.
    #[arg(long)]
    pub gt: PathBuf,
    /// Tracker output in the same XML format.
    #[arg(long)]
    pub system: PathBuf,
    /// Per-frame distance CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary text to write (always printed).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Minimum visible markers for a ground-truth object to be compared.
    #[arg(long, default_value_t = 1)]
    pub min_visible: u32,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Session header XML.
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, env = "OMNIGT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of extracted frame images (overrides the session header).
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Tracker output XML for the comparison endpoint.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[command(flatten)]
    pub lm: LmArgs,
}
