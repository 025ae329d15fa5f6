//! Video-to-mocap frame alignment from two flash events.
//!
//! Two flashes visible in both streams fix an affine map from video frame
//! index to mocap frame index. Lookups evaluate it in exact integer
//! arithmetic, so half-way cases are detected exactly and resolved toward
//! the later mocap frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("flash anchors are degenerate: {0}")]
    DegenerateAnchors(&'static str),
    #[error("mocap timeline is empty")]
    EmptyTimeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashPair {
    pub video_frame: u64,
    pub mocap_frame: u64,
}

impl FlashPair {
    pub fn new(video_frame: u64, mocap_frame: u64) -> Self {
        Self {
            video_frame,
            mocap_frame,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncModel {
    pub first: FlashPair,
    pub second: FlashPair,
    /// Mocap frames per video frame.
    pub slope: f64,
}

pub fn build_sync(a: FlashPair, b: FlashPair) -> Result<SyncModel, SyncError> {
    if a.video_frame == b.video_frame {
        return Err(SyncError::DegenerateAnchors(
            "both flashes on the same video frame",
        ));
    }
    let (first, second) = if a.video_frame < b.video_frame {
        (a, b)
    } else {
        (b, a)
    };
    if second.mocap_frame <= first.mocap_frame {
        return Err(SyncError::DegenerateAnchors(
            "mocap frames do not increase with video frames",
        ));
    }
    let slope = (second.mocap_frame - first.mocap_frame) as f64
        / (second.video_frame - first.video_frame) as f64;
    Ok(SyncModel {
        first,
        second,
        slope,
    })
}

impl SyncModel {
    /// `(numerator, denominator)` of the continuous mocap frame for video
    /// frame `v`; the denominator is positive.
    fn rational(&self, v: u64) -> (i128, i128) {
        let den = (self.second.video_frame - self.first.video_frame) as i128;
        let rise = (self.second.mocap_frame - self.first.mocap_frame) as i128;
        let num = self.first.mocap_frame as i128 * den
            + (v as i128 - self.first.video_frame as i128) * rise;
        (num, den)
    }

    /// Continuous mocap frame for a video frame (extrapolates outside the
    /// anchors).
    pub fn target(&self, v: u64) -> f64 {
        let (num, den) = self.rational(v);
        num as f64 / den as f64
    }

    pub fn video_to_mocap(&self, v: u64, available: &[u64]) -> Result<u64, SyncError> {
        video_to_mocap(self, v, available)
    }
}

/// Nearest entry of the sorted `available` frames to the synced target;
/// exact ties go to the larger frame, out-of-range targets clamp.
pub fn video_to_mocap(model: &SyncModel, v: u64, available: &[u64]) -> Result<u64, SyncError> {
    if available.is_empty() {
        return Err(SyncError::EmptyTimeline);
    }
    debug_assert!(
        available.windows(2).all(|w| w[0] <= w[1]),
        "timeline not sorted"
    );
    let (num, den) = model.rational(v);
    let idx = available.partition_point(|&a| (a as i128) * den < num);
    if idx == 0 {
        return Ok(available[0]);
    }
    if idx == available.len() {
        return Ok(available[idx - 1]);
    }
    let lo = available[idx - 1];
    let hi = available[idx];
    let below = num - lo as i128 * den;
    let above = hi as i128 * den - num;
    Ok(if above <= below { hi } else { lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session_model() -> SyncModel {
        build_sync(FlashPair::new(36, 100), FlashPair::new(362, 969)).unwrap()
    }

    #[test]
    fn slope_from_anchors() {
        let m = session_model();
        assert_eq!(m.slope, 869.0 / 326.0);
        assert!((m.slope - 2.6656).abs() < 1e-4);
    }

    #[test]
    fn degenerate_anchors() {
        assert!(matches!(
            build_sync(FlashPair::new(10, 50), FlashPair::new(10, 80)),
            Err(SyncError::DegenerateAnchors(_))
        ));
        assert!(matches!(
            build_sync(FlashPair::new(10, 80), FlashPair::new(20, 80)),
            Err(SyncError::DegenerateAnchors(_))
        ));
        assert!(matches!(
            build_sync(FlashPair::new(10, 80), FlashPair::new(20, 40)),
            Err(SyncError::DegenerateAnchors(_))
        ));
    }

    #[test]
    fn anchor_order_does_not_matter() {
        let a = FlashPair::new(36, 100);
        let b = FlashPair::new(362, 969);
        assert_eq!(build_sync(a, b), build_sync(b, a));
    }

    #[test]
    fn identity_mapping() {
        let m = build_sync(FlashPair::new(0, 0), FlashPair::new(50, 50)).unwrap();
        assert_eq!(m.slope, 1.0);
        let timeline: Vec<u64> = (0..=50).collect();
        for v in 0..=50 {
            assert_eq!(m.video_to_mocap(v, &timeline).unwrap(), v);
        }
    }

    #[test]
    fn half_way_rounds_up() {
        let m = session_model();
        assert_eq!(m.target(199), 534.5);
        let timeline: Vec<u64> = (100..=969).collect();
        assert_eq!(m.video_to_mocap(199, &timeline).unwrap(), 535);
        assert_eq!(m.video_to_mocap(36, &timeline).unwrap(), 100);
        assert_eq!(m.video_to_mocap(362, &timeline).unwrap(), 969);
    }

    #[test]
    fn clamps_outside_timeline() {
        let m = session_model();
        let timeline: Vec<u64> = (100..=969).collect();
        assert_eq!(m.video_to_mocap(0, &timeline).unwrap(), 100);
        assert_eq!(m.video_to_mocap(5000, &timeline).unwrap(), 969);
        assert_eq!(m.video_to_mocap(5, &[]), Err(SyncError::EmptyTimeline));
    }
}
