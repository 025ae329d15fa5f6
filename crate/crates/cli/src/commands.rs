use std::fmt::Write as _;
use std::path::Path;

use omnigt::dataio::calib::{
    parse_intrinsics_json, parse_pose_json, write_calibration_json, write_pose_json,
    CalibrationFile, PoseFile,
};
use omnigt::dataio::corners::parse_corner_views;
use omnigt::dataio::groundtruth::{parse_groundtruth_xml, write_groundtruth_xml, GroundTruthFrame};
use omnigt::dataio::mocap::flash_rows;
use omnigt::dataio::session::{load_session_file, Session};
use omnigt::dataio::training::parse_training_xml;
use omnigt::evaluation::{
    compare, format_comparison_summary, format_stats_table, reprojection_errors,
    write_error_map_csv, write_series_csv, ReprojectionReport,
};
use omnigt::extrinsic::estimate_pose;
use omnigt::geometry::LensId;
use omnigt::intrinsic::{calibrate, BoardSpec};
use omnigt::mapping::{map_video, run_from_session, session_poses, session_sync, MappingError};

use crate::args::{
    CalibrateArgs, Cli, Command, CompareArgs, MapArgs, PoseArgs, StatsArgs, SyncCheckArgs,
};
use crate::error::CliError;
use crate::output::{read_file, write_artifacts, Artifact};

/// Files to write and text to print for one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let outcome = match cli.command {
        Command::Calibrate(a) => calibrate_cmd(&a)?,
        Command::Pose(a) => pose_cmd(&a)?,
        Command::SyncCheck(a) => sync_check_cmd(&a)?,
        Command::Map(a) => map_cmd(&a)?,
        Command::Stats(a) => stats_cmd(&a)?,
        Command::Compare(a) => compare_cmd(&a)?,
        Command::Serve(a) => return crate::server::serve_blocking(&a),
    };
    write_artifacts(&outcome.artifacts)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", outcome.stdout);
    Ok(())
}

pub fn load_session(path: &Path) -> Result<Session, CliError> {
    load_session_file(path)
        .map(|(s, _)| s)
        .map_err(|e| CliError::data(path, e))
}

pub fn read_groundtruth(path: &Path) -> Result<Vec<GroundTruthFrame>, CliError> {
    parse_groundtruth_xml(&read_file(path)?).map_err(|e| CliError::data(path, e))
}

pub fn calibrate_cmd(a: &CalibrateArgs) -> Result<Outcome, CliError> {
    let board = BoardSpec::new(a.cols as usize, a.rows as usize, a.square)?;
    let views = parse_corner_views(&read_file(&a.corners)?, &board)
        .map_err(|e| CliError::data(&a.corners, e))?;
    let result = calibrate(&views, &board, &a.lm.options())?;
    let file = CalibrationFile::new(&result, &views);
    let mut out = Outcome::default();
    if !result.converged() {
        out.warnings.push(format!(
            "calibration hit the {} iteration limit",
            a.lm.max_iterations
        ));
    }
    let i = &result.intrinsics;
    out.stdout = format!(
        "{} views, RMS {:.4} px, {} iterations\nfx {:.4} fy {:.4} cx {:.4} cy {:.4}\n",
        views.len(),
        result.rms_error,
        result.optimizer.iterations,
        i.fx,
        i.fy,
        i.cx,
        i.cy
    );
    out.artifacts
        .push(Artifact::new(&a.out, write_calibration_json(&file)));
    Ok(out)
}

pub fn pose_cmd(a: &PoseArgs) -> Result<Outcome, CliError> {
    let ts =
        parse_training_xml(&read_file(&a.training)?).map_err(|e| CliError::data(&a.training, e))?;
    let intr = parse_intrinsics_json(&read_file(&a.intrinsics)?)
        .map_err(|e| CliError::data(&a.intrinsics, e))?;
    let est =
        estimate_pose(&ts, ts.lens, &intr, &a.lm.options()).map_err(|source| CliError::Pose {
            lens: ts.lens,
            source,
        })?;
    let mut out = Outcome::default();
    if !est.converged() {
        out.warnings.push(format!(
            "pose refinement hit the {} iteration limit",
            a.lm.max_iterations
        ));
    }
    out.stdout = format_stats_table(&[(ts.lens, &est.report)]);
    out.artifacts.push(Artifact::new(
        &a.out,
        write_pose_json(&PoseFile::new(ts.lens, &ts.session, &est)),
    ));
    if let Some(path) = &a.report {
        out.artifacts
            .push(Artifact::new(path, report_json(&est.report)));
    }
    Ok(out)
}

pub fn report_json(report: &ReprojectionReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

fn timeline(session: &Session) -> Vec<u64> {
    let mut t: Vec<u64> = session
        .streams
        .iter()
        .flat_map(|(_, r)| r.iter().map(|m| m.frame))
        .collect();
    t.sort_unstable();
    t.dedup();
    t
}

pub fn sync_check_cmd(a: &SyncCheckArgs) -> Result<Outcome, CliError> {
    let session = load_session(&a.session)?;
    let model = session_sync(&session)?;
    let t = timeline(&session);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "anchors: video {} -> mocap {}, video {} -> mocap {}",
        model.first.video_frame,
        model.first.mocap_frame,
        model.second.video_frame,
        model.second.mocap_frame
    );
    let _ = writeln!(s, "slope: {:.6} mocap frames per video frame", model.slope);
    match (t.first(), t.last()) {
        (Some(lo), Some(hi)) => {
            let gaps = (hi - lo + 1) as usize - t.len();
            let _ = writeln!(
                s,
                "timeline: {} frames ({lo}..{hi}), {gaps} missing",
                t.len()
            );
        }
        _ => {
            let _ = writeln!(s, "timeline: empty");
        }
    }
    let mut flashes: Vec<u64> = session
        .streams
        .iter()
        .flat_map(|(_, r)| flash_rows(r).into_iter().map(|m| m.frame))
        .chain(
            session
                .wand
                .iter()
                .flat_map(|w| flash_rows(w).into_iter().map(|m| m.frame)),
        )
        .collect();
    flashes.sort_unstable();
    flashes.dedup();
    let _ = writeln!(s, "flagged mocap rows: {flashes:?}");
    for anchor in [model.first, model.second] {
        if !t.is_empty() && t.binary_search(&anchor.mocap_frame).is_err() {
            let _ = writeln!(
                s,
                "warning: anchor mocap frame {} is not in the timeline",
                anchor.mocap_frame
            );
        }
    }
    let (start, end) = session
        .header
        .range
        .unwrap_or((model.first.video_frame, model.second.video_frame));
    for v in [start, end].into_iter().chain(a.frames.iter().copied()) {
        let nearest = model.video_to_mocap(v, &t)?;
        let _ = writeln!(
            s,
            "video {v}: target {} -> mocap {nearest}",
            model.target(v)
        );
    }
    Ok(Outcome {
        stdout: s,
        ..Outcome::default()
    })
}

pub fn map_cmd(a: &MapArgs) -> Result<Outcome, CliError> {
    let session = load_session(&a.session)?;
    let mut run = run_from_session(&session, &a.lm.options())?;
    run.start = a.start.unwrap_or(run.start);
    run.end = a.end.unwrap_or(run.end);
    if run.start > run.end {
        return Err(MappingError::InvalidRange {
            start: run.start,
            end: run.end,
        }
        .into());
    }
    let (frames, summary) = map_video(&run);
    let mut out = Outcome::default();
    let mut s = format!("{} frames ({}..{})\n", summary.frames, run.start, run.end);
    for o in &summary.objects {
        let _ = writeln!(
            s,
            "{} ({}): {} emitted, {} no record, {} no lens, {} off image, {} lens changes",
            o.name, o.id, o.emitted, o.no_record, o.no_lens, o.off_image, o.lens_crossings
        );
    }
    out.stdout = s;
    out.artifacts
        .push(Artifact::new(&a.out, write_groundtruth_xml(&frames)));
    if let Some(path) = &a.summary {
        let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
        bytes.push(b'\n');
        out.artifacts.push(Artifact::new(path, bytes));
    }
    Ok(out)
}

pub fn stats_cmd(a: &StatsArgs) -> Result<Outcome, CliError> {
    let mut reports: Vec<(LensId, ReprojectionReport)> = Vec::new();
    if let Some(path) = &a.session {
        let session = load_session(path)?;
        let poses = session_poses(&session, &a.lm.options())?;
        for (lens, (model, _)) in &poses {
            let ts = &session.training[lens];
            reports.push((
                *lens,
                reprojection_errors(ts, &model.intrinsics, &model.pose)?,
            ));
        }
    } else {
        let (Some(tp), Some(ip), Some(pp)) = (&a.training, &a.intrinsics, &a.pose) else {
            return Err(CliError::Usage(
                "--training needs --intrinsics and --pose".into(),
            ));
        };
        let ts = parse_training_xml(&read_file(tp)?).map_err(|e| CliError::data(tp, e))?;
        let intr = parse_intrinsics_json(&read_file(ip)?).map_err(|e| CliError::data(ip, e))?;
        let pose_file = parse_pose_json(&read_file(pp)?).map_err(|e| CliError::data(pp, e))?;
        if pose_file.lens != ts.lens {
            return Err(CliError::Usage(format!(
                "pose file is for {}, training set for {}",
                pose_file.lens, ts.lens
            )));
        }
        let pose = pose_file.pose().map_err(|e| CliError::data(pp, e))?;
        reports.push((ts.lens, reprojection_errors(&ts, &intr, &pose)?));
    }
    let rows: Vec<(LensId, &ReprojectionReport)> = reports.iter().map(|(l, r)| (*l, r)).collect();
    let table = format_stats_table(&rows);
    let mut out = Outcome {
        stdout: table.clone(),
        ..Outcome::default()
    };
    for (lens, r) in &reports {
        if r.excluded > 0 {
            out.warnings.push(format!(
                "{lens}: {} points behind the lens were excluded",
                r.excluded
            ));
        }
    }
    if let Some(path) = &a.out {
        out.artifacts.push(Artifact::new(path, table.into_bytes()));
    }
    if let Some(path) = &a.error_map {
        out.artifacts
            .push(Artifact::new(path, write_error_map_csv(&rows)));
    }
    Ok(out)
}

pub fn compare_cmd(a: &CompareArgs) -> Result<Outcome, CliError> {
    let gt = read_groundtruth(&a.gt)?;
    let sys = read_groundtruth(&a.system)?;
    let result = compare(&gt, &sys, a.min_visible);
    let summary = format_comparison_summary(&result);
    let mut out = Outcome {
        stdout: summary.clone(),
        ..Outcome::default()
    };
    out.artifacts
        .push(Artifact::new(&a.out, write_series_csv(&result)));
    if let Some(path) = &a.summary {
        out.artifacts
            .push(Artifact::new(path, summary.into_bytes()));
    }
    Ok(out)
}
