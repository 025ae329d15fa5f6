//! Re-projection error statistics and tracker-versus-ground-truth comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::groundtruth::{GroundTruthFrame, GroundTruthObject};
use crate::extrinsic::TrainingSet;
use crate::geometry::{project, CameraIntrinsics, CameraPose, LensId, PixelPoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvaluationError {
    #[error("training set is empty")]
    EmptySet,
}

/// Mean and sample standard deviation of a list of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sigma: f64,
    pub count: usize,
    /// Set when `count == 1`; sigma is then reported as 0.
    pub singleton: bool,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                sigma: 0.0,
                count: 0,
                singleton: false,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sigma = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sigma,
            count: n,
            singleton: n == 1,
        }
    }
}

/// JSON has no infinity; non-finite errors travel as `null`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionSample {
    pub frame: u64,
    pub image: PixelPoint,
    /// `None` when the world point projects behind the lens.
    pub reprojected: Option<PixelPoint>,
    /// Infinite when `reprojected` is `None`.
    #[serde(with = "finite_or_null")]
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionReport {
    pub samples: Vec<ReprojectionSample>,
    pub mean: f64,
    pub sigma: f64,
    pub count: usize,
    /// Samples left out of `mean`/`sigma` because they could not be projected.
    pub excluded: usize,
    pub singleton: bool,
}

impl ReprojectionReport {
    pub fn from_samples(samples: Vec<ReprojectionSample>) -> Self {
        let finite: Vec<f64> = samples
            .iter()
            .map(|s| s.error)
            .filter(|e| e.is_finite())
            .collect();
        let stats = Stats::of(&finite);
        Self {
            count: samples.len(),
            excluded: samples.len() - finite.len(),
            mean: stats.mean,
            sigma: stats.sigma,
            singleton: stats.singleton,
            samples,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.error).collect()
    }
}

pub fn reprojection_errors(
    ts: &TrainingSet,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<ReprojectionReport, EvaluationError> {
    if ts.points.is_empty() {
        return Err(EvaluationError::EmptySet);
    }
    let samples = ts
        .points
        .iter()
        .map(|p| match project(intr, pose, &p.world) {
            Ok(px) => ReprojectionSample {
                frame: p.frame,
                image: p.image,
                reprojected: Some(px),
                error: p.image.distance(&px),
            },
            Err(_) => ReprojectionSample {
                frame: p.frame,
                image: p.image,
                reprojected: None,
                error: f64::INFINITY,
            },
        })
        .collect();
    Ok(ReprojectionReport::from_samples(samples))
}

/// Error at each training point, in report order.
pub fn error_map(report: &ReprojectionReport) -> Vec<(PixelPoint, f64)> {
    report.samples.iter().map(|s| (s.image, s.error)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeBias {
    /// Radius separating the two groups.
    pub threshold: f64,
    pub inner: Stats,
    pub outer: Stats,
}

/// Splits finite samples by distance from `centre`: radius above
/// `fraction` of the largest radius goes to the outer group.
pub fn edge_bias(report: &ReprojectionReport, centre: PixelPoint, fraction: f64) -> EdgeBias {
    let finite: Vec<(f64, f64)> = report
        .samples
        .iter()
        .filter(|s| s.error.is_finite())
        .map(|s| (s.image.distance(&centre), s.error))
        .collect();
    let max = finite.iter().map(|(r, _)| *r).fold(0.0, f64::max);
    let threshold = fraction * max;
    let (outer, inner): (Vec<_>, Vec<_>) = finite.iter().partition(|(r, _)| *r > threshold);
    let errs = |g: &[&(f64, f64)]| g.iter().map(|(_, e)| *e).collect::<Vec<_>>();
    EdgeBias {
        threshold,
        inner: Stats::of(&errs(&inner)),
        outer: Stats::of(&errs(&outer)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub frame: u64,
    pub lens: LensId,
    /// Centroid distance in pixels, `None` when the tracker reported nothing.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectComparison {
    pub name: String,
    pub id: String,
    pub series: Vec<SeriesPoint>,
    /// Over matched frames only.
    pub mean: Option<f64>,
    pub max: Option<f64>,
    pub matched: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// Sorted by object name.
    pub objects: Vec<ObjectComparison>,
    /// Tracker objects with no ground-truth counterpart.
    pub unmatched: usize,
    pub warnings: Vec<String>,
}

impl ComparisonResult {
    pub fn object(&self, name: &str) -> Option<&ObjectComparison> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn compared(&self) -> usize {
        self.objects.iter().map(|o| o.matched + o.missing).sum()
    }
}

fn by_frame(frames: &[GroundTruthFrame]) -> BTreeMap<u64, Vec<&GroundTruthObject>> {
    let mut out: BTreeMap<u64, Vec<&GroundTruthObject>> = BTreeMap::new();
    for f in frames {
        out.entry(f.number).or_default().extend(f.objects.iter());
    }
    out
}

/// Pairs tracker objects with ground truth by name and lens, frame by frame.
/// Ground-truth objects with fewer than `min_visible` visible markers are
/// skipped.
pub fn compare(
    gt: &[GroundTruthFrame],
    sys: &[GroundTruthFrame],
    min_visible: u32,
) -> ComparisonResult {
    let gt_frames = by_frame(gt);
    let mut sys_frames = by_frame(sys);
    let mut objects: BTreeMap<String, ObjectComparison> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut unmatched = 0;

    for (frame, gt_objs) in &gt_frames {
        let candidates = sys_frames.remove(frame).unwrap_or_default();
        let mut used = vec![false; candidates.len()];
        for g in gt_objs {
            let slot = candidates
                .iter()
                .enumerate()
                .position(|(i, s)| !used[i] && s.name == g.name && s.lens == g.lens);
            if let Some(i) = slot {
                used[i] = true;
            }
            if g.visible < min_visible {
                continue;
            }
            let entry = objects
                .entry(g.name.clone())
                .or_insert_with(|| ObjectComparison {
                    name: g.name.clone(),
                    id: g.id.clone(),
                    series: Vec::new(),
                    mean: None,
                    max: None,
                    matched: 0,
                    missing: 0,
                });
            let distance = slot.map(|i| {
                let s = candidates[i];
                if s.id != g.id {
                    warnings.push(format!(
                        "frame {frame}: {} id {} in ground truth but {} in tracker output",
                        g.name, g.id, s.id
                    ));
                }
                g.centroid.distance(&s.centroid)
            });
            entry.series.push(SeriesPoint {
                frame: *frame,
                lens: g.lens,
                distance,
            });
        }
        unmatched += used.iter().filter(|u| !**u).count();
    }
    unmatched += sys_frames.values().map(Vec::len).sum::<usize>();

    let objects = objects
        .into_values()
        .map(|mut o| {
            let d: Vec<f64> = o.series.iter().filter_map(|p| p.distance).collect();
            o.matched = d.len();
            o.missing = o.series.len() - d.len();
            if !d.is_empty() {
                o.mean = Some(Stats::of(&d).mean);
                o.max = Some(d.iter().copied().fold(0.0, f64::max));
            }
            o
        })
        .collect();
    ComparisonResult {
        objects,
        unmatched,
        warnings,
    }
}

pub fn write_series_csv(result: &ComparisonResult) -> Vec<u8> {
    let mut out = String::from("object,id,frame,lens,distance\n");
    for o in &result.objects {
        for p in &o.series {
            let d = p.distance.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", o.name, o.id, p.frame, p.lens, d);
        }
    }
    out.into_bytes()
}

pub fn write_error_map_csv(rows: &[(LensId, &ReprojectionReport)]) -> Vec<u8> {
    let mut out = String::from("lens,frame,u,v,error\n");
    for (lens, report) in rows {
        for s in &report.samples {
            let e = if s.error.is_finite() {
                s.error.to_string()
            } else {
                String::new()
            };
            let _ = writeln!(out, "{lens},{},{},{},{e}", s.frame, s.image.u, s.image.v);
        }
    }
    out.into_bytes()
}

/// Per-lens table with mean, σ and point count columns.
pub fn format_stats_table(rows: &[(LensId, &ReprojectionReport)]) -> String {
    let mut out = format!(
        "{:<12}{:>16}{:>14}{:>8}\n",
        "Lens", "mean (pixels)", "σ (pixels)", "Points"
    );
    for (lens, r) in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>16.2}{:>14.2}{:>8}",
            lens.as_str(),
            r.mean,
            r.sigma,
            r.count - r.excluded
        );
    }
    out
}

pub fn format_comparison_summary(result: &ComparisonResult) -> String {
    let mut out = format!(
        "{:<12}{:>6}{:>12}{:>12}{:>9}{:>9}\n",
        "Object", "Id", "mean (px)", "max (px)", "Matched", "Missing"
    );
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    for o in &result.objects {
        let _ = writeln!(
            out,
            "{:<12}{:>6}{:>12}{:>12}{:>9}{:>9}",
            o.name,
            o.id,
            fmt(o.mean),
            fmt(o.max),
            o.matched,
            o.missing
        );
    }
    let _ = writeln!(out, "unmatched tracker objects: {}", result.unmatched);
    for w in &result.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
