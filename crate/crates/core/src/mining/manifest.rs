//! Line-oriented CSV manifests describing one image sequence.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRIC_HEADER: [&str; 8] = [
    "seq_id",
    "condition",
    "frame",
    "timestamp_s",
    "x_m",
    "y_m",
    "z_m",
    "image_path",
];

pub const GEOGRAPHIC_HEADER: [&str; 8] = [
    "seq_id",
    "condition",
    "frame",
    "timestamp_s",
    "lat",
    "lon",
    "alt",
    "image_path",
];

/// Mean Earth radius in metres.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pose {
    Metric { x: f64, y: f64, z: f64 },
    /// Degrees, degrees, metres.
    Geographic { lat: f64, lon: f64, alt: f64 },
}

impl Pose {
    /// Local metric coordinates about `origin` (equirectangular for geographic poses).
    pub fn local(&self, origin: &Pose) -> Option<[f64; 3]> {
        match (*self, *origin) {
            (Pose::Metric { x, y, z }, Pose::Metric { .. }) => Some([x, y, z]),
            (
                Pose::Geographic { lat, lon, alt },
                Pose::Geographic {
                    lat: lat0,
                    lon: lon0,
                    alt: alt0,
                },
            ) => {
                let east = (lon - lon0).to_radians() * lat0.to_radians().cos() * EARTH_RADIUS_M;
                let north = (lat - lat0).to_radians() * EARTH_RADIUS_M;
                Some([east, north, alt - alt0])
            }
            _ => None,
        }
    }

    pub fn is_geographic(&self) -> bool {
        matches!(self, Pose::Geographic { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub timestamp: f64,
    pub pose: Pose,
    /// Path as written in the manifest.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub seq_id: String,
    pub condition: String,
    pub geographic: bool,
    /// Directory relative image paths resolve against.
    pub base_dir: PathBuf,
    pub records: Vec<FrameRecord>,
}

impl SequenceManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_path(&self, frame: usize) -> PathBuf {
        let p = Path::new(&self.records[frame].image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Positions in metres. Geographic poses are projected about the first fix.
    pub fn local_positions(&self) -> Vec<[f64; 3]> {
        match self.records.first() {
            Some(first) => self.positions_about(&first.pose),
            None => Vec::new(),
        }
    }

    /// Positions about an explicit origin of the same pose kind.
    pub fn positions_about(&self, origin: &Pose) -> Vec<[f64; 3]> {
        self.records
            .iter()
            .map(|r| r.pose.local(origin).unwrap_or([f64::NAN; 3]))
            .collect()
    }

    /// Lists image files that do not exist.
    pub fn missing_images(&self) -> Vec<String> {
        (0..self.records.len())
            .map(|i| self.image_path(i))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = if self.geographic {
            GEOGRAPHIC_HEADER
        } else {
            METRIC_HEADER
        };
        w.write_record(header).map_err(csv_write_err)?;
        for r in &self.records {
            let (a, b, c) = match r.pose {
                Pose::Metric { x, y, z } => (x, y, z),
                Pose::Geographic { lat, lon, alt } => (lat, lon, alt),
            };
            w.write_record([
                self.seq_id.clone(),
                self.condition.clone(),
                r.frame.to_string(),
                r.timestamp.to_string(),
                a.to_string(),
                b.to_string(),
                c.to_string(),
                r.image.clone(),
            ])
            .map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::format(format!("cannot write CSV: {e}"))
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn field_f64(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(line, format!("{name} `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{name} must be finite")));
    }
    Ok(v)
}

/// Parses manifest text. Relative image paths resolve against `base_dir`;
/// lines starting with `#` are comments.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<SequenceManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header")),
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let geographic = if cols == METRIC_HEADER {
        false
    } else if cols == GEOGRAPHIC_HEADER {
        true
    } else {
        return Err(parse_err(
            1,
            format!("unexpected header, want `{}`", METRIC_HEADER.join(",")),
        ));
    };

    let mut seq_id = String::new();
    let mut condition = String::new();
    let mut records: Vec<FrameRecord> = Vec::new();
    for row in rows {
        let rec = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != 8 {
            return Err(parse_err(line, format!("expected 8 fields, found {}", rec.len())));
        }
        let sid = rec[0].trim();
        let cond = rec[1].trim();
        if records.is_empty() {
            if sid.is_empty() {
                return Err(parse_err(line, "empty seq_id"));
            }
            seq_id = sid.to_string();
            condition = cond.to_string();
        } else if sid != seq_id || cond != condition {
            return Err(Error::Validation {
                line: line as usize,
                message: format!(
                    "sequence `{sid}`/`{cond}` differs from `{seq_id}`/`{condition}` of the first record"
                ),
            });
        }
        let frame: usize = rec[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("frame `{}` is not an index", rec[2].trim())))?;
        if frame != records.len() {
            return Err(Error::Validation {
                line: line as usize,
                message: format!("frame {frame} out of order, expected {}", records.len()),
            });
        }
        let timestamp = field_f64(&rec, 3, "timestamp_s", line)?;
        if let Some(prev) = records.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::Validation {
                    line: line as usize,
                    message: format!(
                        "timestamp {timestamp} not strictly after previous {}",
                        prev.timestamp
                    ),
                });
            }
        }
        let (a, b, c) = (
            field_f64(&rec, 4, cols[4], line)?,
            field_f64(&rec, 5, cols[5], line)?,
            field_f64(&rec, 6, cols[6], line)?,
        );
        let pose = if geographic {
            if !(-90.0..=90.0).contains(&a) || !(-180.0..=180.0).contains(&b) {
                return Err(Error::Validation {
                    line: line as usize,
                    message: format!("lat/lon ({a}, {b}) out of range"),
                });
            }
            Pose::Geographic {
                lat: a,
                lon: b,
                alt: c,
            }
        } else {
            Pose::Metric { x: a, y: b, z: c }
        };
        let image = rec[7].trim();
        if image.is_empty() {
            return Err(parse_err(line, "empty image_path"));
        }
        records.push(FrameRecord {
            frame,
            timestamp,
            pose,
            image: image.to_string(),
        });
    }
    Ok(SequenceManifest {
        seq_id,
        condition,
        geographic,
        base_dir: base_dir.to_path_buf(),
        records,
    })
}

/// Reads and validates a manifest file. With `strict`, every referenced image must exist.
pub fn load_manifest(path: &Path, strict: bool) -> Result<SequenceManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = parse_manifest(&text, &base)?;
    if strict {
        let missing = manifest.missing_images();
        if !missing.is_empty() {
            return Err(Error::Resolution { missing });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "seq_id,condition,frame,timestamp_s,x_m,y_m,z_m,image_path\n\
        s,day,0,0.0,0,0,0,a.png\n\
        s,day,1,0.5,1,0,0,b.png\n\
        s,day,2,1.0,2,0,0,c.png\n";

    #[test]
    fn three_records() {
        let m = parse_manifest(GOOD, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.seq_id, "s");
        assert_eq!(m.condition, "day");
        assert_eq!(m.image_path(1), PathBuf::from("/data/b.png"));
        assert_eq!(m.local_positions()[2], [2.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicated_timestamp_names_line() {
        let text = GOOD.replace("1,0.5,", "1,0.0,");
        match parse_manifest(&text, Path::new(".")) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_names_line() {
        let text = GOOD.replace("2,0,0,c.png", "zz,0,0,c.png");
        match parse_manifest(&text, Path::new(".")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn strict_load_lists_missing_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, GOOD).unwrap();
        std::fs::write(dir.path().join("a.png"), b"").unwrap();
        assert_eq!(load_manifest(&path, false).unwrap().len(), 3);
        match load_manifest(&path, true) {
            Err(Error::Resolution { missing }) => {
                assert_eq!(missing.len(), 2);
                assert!(missing[0].ends_with("b.png"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let m = parse_manifest(&format!("{}\n", METRIC_HEADER.join(",")), Path::new(".")).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn geographic_projection_is_local() {
        let text = "seq_id,condition,frame,timestamp_s,lat,lon,alt,image_path\n\
            g,x,0,0,45.0,7.0,100,a.png\n\
            g,x,1,1,45.0001,7.0,101,b.png\n";
        let m = parse_manifest(text, Path::new(".")).unwrap();
        let p = m.local_positions();
        assert_eq!(p[0], [0.0, 0.0, 0.0]);
        assert!((p[1][1] - 11.119).abs() < 0.01);
        assert!((p[1][2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn round_trip() {
        let m = parse_manifest(GOOD, Path::new(".")).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = parse_manifest(std::str::from_utf8(&buf).unwrap(), Path::new(".")).unwrap();
        assert_eq!(m, back);
    }
}
