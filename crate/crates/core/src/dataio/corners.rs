//! Detected chessboard corners, one CSV row per corner:
//!
//! ```text
//! view,u,v
//! img_0001,412.71,233.05
//! ```
//!
//! Rows of a view are contiguous and follow the board's row-major corner
//! order, so board coordinates come from the [`BoardSpec`].

use super::DataError;
use crate::geometry::PixelPoint;
use crate::intrinsic::{BoardSpec, CornerView};

pub fn parse_corner_views(bytes: &[u8], board: &BoardSpec) -> Result<Vec<CornerView>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| DataError::MalformedRow {
        row: 1,
        message: e.to_string(),
    })?;
    let names: Vec<String> = headers
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if names != ["view", "u", "v"] {
        return Err(DataError::MissingHeader);
    }

    let mut blocks: Vec<(String, Vec<PixelPoint>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(DataError::MalformedRow {
                row,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let view = rec[0].trim().to_string();
        let coord = |k: usize| -> Result<f64, DataError> {
            rec[k]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::MalformedRow {
                    row,
                    message: format!("invalid coordinate `{}`", &rec[k]),
                })
        };
        let p = PixelPoint::new(coord(1)?, coord(2)?);
        match blocks.last_mut() {
            Some((id, pts)) if *id == view => pts.push(p),
            _ => {
                if blocks.iter().any(|(id, _)| *id == view) {
                    return Err(DataError::MalformedRow {
                        row,
                        message: format!("view `{view}` is split into separate blocks"),
                    });
                }
                blocks.push((view, vec![p]));
            }
        }
    }

    blocks
        .into_iter()
        .map(|(id, pts)| {
            if pts.len() != board.corner_count() {
                return Err(DataError::CountMismatch {
                    view: id,
                    expected: board.corner_count(),
                    found: pts.len(),
                });
            }
            Ok(CornerView::from_image_points(id, board, &pts))
        })
        .collect()
}

pub fn write_corner_views(views: &[CornerView]) -> Vec<u8> {
    let mut out = String::from("view,u,v\n");
    for v in views {
        for c in &v.corners {
            out.push_str(&format!("{},{},{}\n", v.id, c.image.u, c.image.v));
        }
    }
    out.into_bytes()
}
