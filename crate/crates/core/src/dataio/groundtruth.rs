//! Ground-truth annotation XML.
//!
//! ```xml
//! <dataset>
//!   <frameInformation>
//!     <frame number="1" />
//!     <object name="EE1" lens="Backside" id="01">
//!         <boxinfo y="488" x="499" width="63" height="74"/>
//!         <centroid y="525" x="530"/>
//!         <visibility visible="5" visibleMax="5"/>
//!     </object>
//!   </frameInformation>
//! </dataset>
//! ```
//!
//! Objects belong to the nearest preceding `<frame>` in their
//! `<frameInformation>` block (objects nested inside `<frame>` are accepted
//! too). The writer emits one block per frame in the layout above.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::xml::{escape, parse_document, Element};
use super::DataError;
use crate::geometry::{LensId, HALF_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntPixel {
    pub x: i64,
    pub y: i64,
}

impl IntPixel {
    /// Rounds half away from zero.
    pub fn round(u: f64, v: f64) -> Self {
        Self {
            x: u.round() as i64,
            y: v.round() as i64,
        }
    }

    pub fn distance(&self, other: &IntPixel) -> f64 {
        ((self.x - other.x) as f64).hypot((self.y - other.y) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxInfo {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

impl BoxInfo {
    pub fn contains(&self, p: &IntPixel) -> bool {
        p.x >= self.x && p.x < self.x + self.width && p.y >= self.y && p.y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub name: String,
    pub id: String,
    pub lens: LensId,
    /// Full-frame pixel.
    pub centroid: IntPixel,
    pub boxinfo: BoxInfo,
    pub visible: u32,
    pub visible_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub number: u64,
    pub objects: Vec<GroundTruthObject>,
}

impl GroundTruthFrame {
    pub fn new(number: u64) -> Self {
        Self {
            number,
            objects: Vec::new(),
        }
    }
}

/// Whether a full-frame column lies in the half image owned by `lens`.
pub fn lens_owns_column(lens: LensId, x: i64) -> bool {
    match lens {
        LensId::Backside => x < HALF_WIDTH as i64,
        LensId::Buttonside => x >= HALF_WIDTH as i64,
    }
}

fn child<'a>(el: &'a Element, path: &str, name: &str) -> Result<&'a Element, DataError> {
    let mut found = el.children.iter().filter(|c| c.name == name);
    let first = found
        .next()
        .ok_or_else(|| DataError::schema(path, format!("missing <{name}>")))?;
    if found.next().is_some() {
        return Err(DataError::schema(path, format!("repeated <{name}>")));
    }
    Ok(first)
}

fn parse_object(el: &Element, path: &str) -> Result<GroundTruthObject, DataError> {
    let name = el.require(path, "name")?.to_string();
    let id = el.require(path, "id")?.to_string();
    let lens: LensId = el
        .require(path, "lens")?
        .parse()
        .map_err(|e: String| DataError::schema(path, e))?;
    for c in &el.children {
        if !matches!(c.name.as_str(), "boxinfo" | "centroid" | "visibility") {
            return Err(DataError::schema(path, format!("unexpected <{}>", c.name)));
        }
    }
    let bpath = format!("{path}/boxinfo");
    let b = child(el, path, "boxinfo")?;
    let boxinfo = BoxInfo {
        x: b.parse_attr(&bpath, "x")?,
        y: b.parse_attr(&bpath, "y")?,
        width: b.parse_attr(&bpath, "width")?,
        height: b.parse_attr(&bpath, "height")?,
    };
    let cpath = format!("{path}/centroid");
    let c = child(el, path, "centroid")?;
    let centroid = IntPixel {
        x: c.parse_attr(&cpath, "x")?,
        y: c.parse_attr(&cpath, "y")?,
    };
    let vpath = format!("{path}/visibility");
    let v = child(el, path, "visibility")?;
    let visible: u32 = v.parse_attr(&vpath, "visible")?;
    let visible_max: u32 = v.parse_attr(&vpath, "visibleMax")?;
    if visible > visible_max {
        return Err(DataError::schema(
            vpath,
            format!("visible {visible} exceeds visibleMax {visible_max}"),
        ));
    }
    if !lens_owns_column(lens, centroid.x) {
        return Err(DataError::schema(
            cpath,
            format!(
                "centroid x={} is outside the {lens} half of the frame",
                centroid.x
            ),
        ));
    }
    Ok(GroundTruthObject {
        name,
        id,
        lens,
        centroid,
        boxinfo,
        visible,
        visible_max,
    })
}

pub fn parse_groundtruth_xml(bytes: &[u8]) -> Result<Vec<GroundTruthFrame>, DataError> {
    let root = parse_document(bytes)?;
    root.expect_name("dataset", "dataset")?;
    let mut frames: BTreeMap<u64, GroundTruthFrame> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    for (bi, block) in root.children.iter().enumerate() {
        let bpath = format!("dataset/frameInformation[{bi}]");
        block.expect_name(&bpath, "frameInformation")?;
        let mut current: Option<u64> = None;
        for (ci, el) in block.children.iter().enumerate() {
            let path = format!("{bpath}/{}[{ci}]", el.name);
            match el.name.as_str() {
                "frame" => {
                    let number: u64 = el.parse_attr(&path, "number")?;
                    if !frames.contains_key(&number) {
                        order.push(number);
                    }
                    let frame = frames
                        .entry(number)
                        .or_insert_with(|| GroundTruthFrame::new(number));
                    for (oi, obj) in el.children.iter().enumerate() {
                        let opath = format!("{path}/object[{oi}]");
                        obj.expect_name(&opath, "object")?;
                        frame.objects.push(parse_object(obj, &opath)?);
                    }
                    current = Some(number);
                }
                "object" => {
                    let number = current.ok_or_else(|| {
                        DataError::schema(&path, "object appears before any <frame>")
                    })?;
                    let obj = parse_object(el, &path)?;
                    frames
                        .get_mut(&number)
                        .expect("current frame exists")
                        .objects
                        .push(obj);
                }
                other => {
                    return Err(DataError::schema(&path, format!("unexpected <{other}>")));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for number in order {
        let frame = frames.remove(&number).expect("ordered frame exists");
        let mut seen = HashSet::new();
        for o in &frame.objects {
            if !seen.insert((o.name.as_str(), o.id.as_str())) {
                return Err(DataError::DuplicateObject {
                    frame: number,
                    name: o.name.clone(),
                    id: o.id.clone(),
                });
            }
        }
        out.push(frame);
    }
    Ok(out)
}

pub fn write_groundtruth_xml(frames: &[GroundTruthFrame]) -> Vec<u8> {
    let mut out = String::from("<dataset>\n");
    for f in frames {
        out.push_str("  <frameInformation>\n");
        out.push_str(&format!("    <frame number=\"{}\" />\n", f.number));
        for o in &f.objects {
            out.push_str(&format!(
                "    <object name=\"{}\" lens=\"{}\" id=\"{}\">\n",
                escape(&o.name),
                o.lens,
                escape(&o.id)
            ));
            out.push_str(&format!(
                "        <boxinfo y=\"{}\" x=\"{}\" width=\"{}\" height=\"{}\"/>\n",
                o.boxinfo.y, o.boxinfo.x, o.boxinfo.width, o.boxinfo.height
            ));
            out.push_str(&format!(
                "        <centroid y=\"{}\" x=\"{}\"/>\n",
                o.centroid.y, o.centroid.x
            ));
            out.push_str(&format!(
                "        <visibility visible=\"{}\" visibleMax=\"{}\"/>\n",
                o.visible, o.visible_max
            ));
            out.push_str("    </object>\n");
        }
        out.push_str("  </frameInformation>\n");
    }
    out.push_str("</dataset>\n");
    out.into_bytes()
}
