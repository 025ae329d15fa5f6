//! Per-object motion-capture CSV.
//!
//! Canonical header: `frame,timestamp,x,y,z,pitch,roll,yaw,markers,sync`.
//! Columns are located by header name, so files with a permuted column order
//! parse as well; the writer always emits the canonical order with LF line
//! endings.

use serde::{Deserialize, Serialize};

use super::DataError;

pub const COLUMNS: [&str; 10] = [
    "frame",
    "timestamp",
    "x",
    "y",
    "z",
    "pitch",
    "roll",
    "yaw",
    "markers",
    "sync",
];

/// One mocap sample. Position in mm, orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MocapRecord {
    pub frame: u64,
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
    pub markers: u32,
    /// Nonzero when a flash was logged on this row.
    pub sync: i32,
}

impl MocapRecord {
    pub fn position(&self) -> crate::geometry::WorldPoint {
        crate::geometry::WorldPoint::new(self.x, self.y, self.z)
    }
}

fn field<T: std::str::FromStr>(raw: &str, column: &str, row: usize) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| DataError::MalformedRow {
        row,
        message: format!("column `{column}`: cannot parse `{raw}`"),
    })
}

pub fn parse_mocap_csv(bytes: &[u8]) -> Result<Vec<MocapRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| DataError::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DataError::MissingHeader);
    }
    let names: Vec<String> = headers
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if !COLUMNS.iter().any(|c| names.iter().any(|n| n == c)) {
        return Err(DataError::MissingHeader);
    }
    let mut index = [0usize; COLUMNS.len()];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| n == col)
            .ok_or_else(|| DataError::schema("header", format!("missing column `{col}`")))?;
    }

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(DataError::MalformedRow {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let get = |k: usize| &rec[index[k]];
        out.push(MocapRecord {
            frame: field(get(0), COLUMNS[0], row)?,
            timestamp: field(get(1), COLUMNS[1], row)?,
            x: field(get(2), COLUMNS[2], row)?,
            y: field(get(3), COLUMNS[3], row)?,
            z: field(get(4), COLUMNS[4], row)?,
            pitch: field(get(5), COLUMNS[5], row)?,
            roll: field(get(6), COLUMNS[6], row)?,
            yaw: field(get(7), COLUMNS[7], row)?,
            markers: field(get(8), COLUMNS[8], row)?,
            sync: field(get(9), COLUMNS[9], row)?,
        });
    }
    Ok(out)
}

pub fn write_mocap_csv(records: &[MocapRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.frame, r.timestamp, r.x, r.y, r.z, r.pitch, r.roll, r.yaw, r.markers, r.sync
        ));
    }
    out.into_bytes()
}

/// Rows whose sync field is set, i.e. candidate flash events.
pub fn flash_rows(records: &[MocapRecord]) -> Vec<&MocapRecord> {
    records.iter().filter(|r| r.sync != 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_row() {
        let text = "frame,timestamp,x,y,z,pitch,roll,yaw,markers,sync\n\
                    12,0.300,1234.5,-200.0,880.0,0.0,0.0,90.0,5,0\n";
        let recs = parse_mocap_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = recs[0];
        assert_eq!((r.frame, r.markers, r.sync), (12, 5, 0));
        assert_eq!((r.x, r.y, r.z, r.yaw), (1234.5, -200.0, 880.0, 90.0));
        assert_eq!(r.timestamp, 0.3);
    }

    #[test]
    fn empty_file_has_no_header() {
        assert_eq!(parse_mocap_csv(b""), Err(DataError::MissingHeader));
        assert_eq!(
            parse_mocap_csv(b"12,0.3,1,2,3,0,0,0,5,0\n"),
            Err(DataError::MissingHeader)
        );
    }

    #[test]
    fn crlf_and_permuted_columns() {
        let text =
            "sync,markers,frame,timestamp,z,y,x,yaw,roll,pitch\r\n1,4,7,0.5,3,2,1,10,20,30\r\n";
        let r = parse_mocap_csv(text.as_bytes()).unwrap()[0];
        assert_eq!((r.frame, r.x, r.y, r.z), (7, 1.0, 2.0, 3.0));
        assert_eq!(
            (r.pitch, r.roll, r.yaw, r.markers, r.sync),
            (30.0, 20.0, 10.0, 4, 1)
        );
        let canonical = write_mocap_csv(&[r]);
        assert!(std::str::from_utf8(&canonical)
            .unwrap()
            .starts_with("frame,timestamp,x,y,z,pitch,roll,yaw,markers,sync\n"));
    }

    #[test]
    fn malformed_rows_report_position() {
        let text = "frame,timestamp,x,y,z,pitch,roll,yaw,markers,sync\n\
                    1,0,0,0,0,0,0,0,5,0\n\
                    2,0,zero,0,0,0,0,0,5,0\n";
        assert!(matches!(
            parse_mocap_csv(text.as_bytes()),
            Err(DataError::MalformedRow { row: 3, .. })
        ));
        let short = "frame,timestamp,x,y,z,pitch,roll,yaw,markers,sync\n1,0,0\n";
        assert!(matches!(
            parse_mocap_csv(short.as_bytes()),
            Err(DataError::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "frame,timestamp,x,y,z,pitch,roll,yaw,markers\n1,0,0,0,0,0,0,0,5\n";
        assert!(matches!(
            parse_mocap_csv(text.as_bytes()),
            Err(DataError::SchemaViolation { .. })
        ));
    }
}
