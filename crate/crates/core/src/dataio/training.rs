//! Wand training-point XML.
//!
//! ```xml
//! <training lens="Backside" session="S1">
//!   <point frame="120" u="512.5" v="400.25" x="1830.2" y="-40.7" z="1105.0"/>
//! </training>
//! ```
//!
//! `u, v` are lens-local pixels; `x, y, z` are world millimetres.

use super::xml::{escape, fmt_f64, parse_document};
use super::DataError;
use crate::extrinsic::{TrainingPoint, TrainingSet};
use crate::geometry::{LensId, PixelPoint, WorldPoint};

pub fn parse_training_xml(bytes: &[u8]) -> Result<TrainingSet, DataError> {
    let root = parse_document(bytes)?;
    root.expect_name("training", "training")?;
    let lens: LensId = root
        .require("training", "lens")?
        .parse()
        .map_err(|e: String| DataError::schema("training", e))?;
    let session = root.attr("session").unwrap_or_default().to_string();
    let mut points = Vec::with_capacity(root.children.len());
    for (i, el) in root.children.iter().enumerate() {
        let path = format!("training/point[{i}]");
        el.expect_name(&path, "point")?;
        points.push(TrainingPoint {
            frame: el.parse_attr(&path, "frame")?,
            image: PixelPoint::new(el.finite(&path, "u")?, el.finite(&path, "v")?),
            world: WorldPoint::new(
                el.finite(&path, "x")?,
                el.finite(&path, "y")?,
                el.finite(&path, "z")?,
            ),
            lens,
        });
    }
    Ok(TrainingSet {
        lens,
        session,
        points,
    })
}

pub fn write_training_xml(ts: &TrainingSet) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<training lens=\"{}\" session=\"{}\">\n",
        ts.lens,
        escape(&ts.session)
    ));
    for p in &ts.points {
        out.push_str(&format!(
            "  <point frame=\"{}\" u=\"{}\" v=\"{}\" x=\"{}\" y=\"{}\" z=\"{}\"/>\n",
            p.frame,
            fmt_f64(p.image.u),
            fmt_f64(p.image.v),
            fmt_f64(p.world.0.x),
            fmt_f64(p.world.0.y),
            fmt_f64(p.world.0.z)
        ));
    }
    out.push_str("</training>\n");
    out.into_bytes()
}
