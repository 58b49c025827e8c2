//! Ground-truth annotation ingestion.
//!
//! * `canonical`: the detection JSON-lines format; scores are ignored and
//!   fixed to 1.0, an optional `timestamp` (seconds) is kept.
//! * `wildtrack-json` / `multiviewx-json`: one JSON array per frame of
//!   `{"personID", "positionID", ...}` records, either a single file or a
//!   directory of `*.json` files (frame id = file stem, sorted by name).
//!   `positionID` indexes a 2.5 cm lattice laid over the area of interest and
//!   decodes to meters relative to the grid origin:
//!     - WILDTRACK (480 × 1440): `x = 0.025·(id mod 480)`, `y = 0.025·(id div 480)`
//!     - MultiviewX (640 × 1000): `x = 0.025·(id div 1000)`, `y = 0.025·(id mod 1000)`
//!
//! Any format aborts with [`DataError::UnitError`] when more than 10 % of the
//! records fall outside the grid.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::detections::parse_records;
use super::DataError;
use crate::geometry::{GroundGrid, WorldPoint};
use crate::heatmap::{Detection, DetectionSet};

const LATTICE_STEP: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationFormat {
    Canonical,
    WildtrackJson,
    MultiviewxJson,
}

impl FromStr for AnnotationFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "wildtrack-json" => Ok(Self::WildtrackJson),
            "multiviewx-json" => Ok(Self::MultiviewxJson),
            _ => Err(format!("unknown annotation format `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedFrame {
    pub frame_id: String,
    /// Scores are 1.0.
    pub gts: DetectionSet<f64>,
    pub timestamp: Option<f64>,
}

/// Only `positionID` is used; other upstream fields are ignored.
#[derive(Debug, Deserialize)]
struct PositionRecord {
    #[serde(rename = "positionID")]
    position_id: i64,
}

impl AnnotationFormat {
    fn decode_position(self, id: i64, origin: WorldPoint<f64>) -> Option<WorldPoint<f64>> {
        if id < 0 {
            return None;
        }
        let (a, b) = match self {
            AnnotationFormat::WildtrackJson => (id % 480, id / 480),
            AnnotationFormat::MultiviewxJson => (id / 1000, id % 1000),
            AnnotationFormat::Canonical => unreachable!("canonical has no position ids"),
        };
        Some(WorldPoint::new(
            origin.x + LATTICE_STEP * a as f64,
            origin.y + LATTICE_STEP * b as f64,
        ))
    }
}

pub fn parse_annotations(
    path: &Path,
    format: AnnotationFormat,
    grid: &GroundGrid<f64>,
) -> Result<Vec<AnnotatedFrame>, DataError> {
    let frames = match format {
        AnnotationFormat::Canonical => parse_canonical(path)?,
        _ => parse_position_files(path, format, grid)?,
    };
    let total: usize = frames.iter().map(|f| f.gts.len()).sum();
    let outside = frames
        .iter()
        .flat_map(|f| f.gts.points())
        .filter(|p| !grid.contains(p))
        .count();
    if outside * 10 > total {
        return Err(DataError::UnitError {
            path: path.display().to_string(),
            out_of_bounds: outside,
            total,
        });
    }
    Ok(frames)
}

fn parse_canonical(path: &Path) -> Result<Vec<AnnotatedFrame>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let source = path.display().to_string();
    parse_records(&text, &source)?
        .into_iter()
        .map(|(line, r)| {
            let dets = r
                .detections
                .iter()
                .map(|p| Detection::new(p.x, p.y, 1.0))
                .collect();
            let gts = DetectionSet::new(r.frame_id.clone(), dets)
                .map_err(|e| DataError::parse(&source, line, e.to_string()))?;
            if let Some(t) = r.timestamp.filter(|t| !t.is_finite()) {
                return Err(DataError::parse(
                    &source,
                    line,
                    format!("non-finite timestamp {t}"),
                ));
            }
            Ok(AnnotatedFrame {
                frame_id: r.frame_id,
                gts,
                timestamp: r.timestamp,
            })
        })
        .collect()
}

fn parse_position_files(
    path: &Path,
    format: AnnotationFormat,
    grid: &GroundGrid<f64>,
) -> Result<Vec<AnnotatedFrame>, DataError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| DataError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut frames = Vec::with_capacity(files.len());
    for file in files {
        let source = file.display().to_string();
        let frame_id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = std::fs::read_to_string(&file).map_err(|e| DataError::io(&file, e))?;
        let records: Vec<PositionRecord> =
            serde_json::from_str(&text).map_err(|e| DataError::Parse {
                path: source.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
        let mut dets = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let p = format
                .decode_position(r.position_id, grid.origin())
                .ok_or_else(|| {
                    DataError::parse(&source, 0, format!("record {i}: negative positionID"))
                })?;
            dets.push(Detection {
                location: p,
                score: 1.0,
            });
        }
        let gts = DetectionSet::new(frame_id.clone(), dets)
            .map_err(|e| DataError::parse(&source, 0, e.to_string()))?;
        frames.push(AnnotatedFrame {
            frame_id,
            gts,
            timestamp: None,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridPreset;

    fn wt() -> GroundGrid<f64> {
        GridPreset::Wildtrack.grid()
    }

    #[test]
    fn canonical_counts_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.jsonl");
        let line = |id: &str, n: usize| {
            let pts: Vec<String> = (0..n)
                .map(|i| format!("{{\"x\":{}.5,\"y\":1.0}}", i))
                .collect();
            format!(
                "{{\"frame_id\":\"{id}\",\"detections\":[{}],\"timestamp\":0.5}}\n",
                pts.join(",")
            )
        };
        std::fs::write(&p, line("0", 3) + &line("1", 5)).unwrap();
        let frames = parse_annotations(&p, AnnotationFormat::Canonical, &wt()).unwrap();
        assert_eq!(
            frames.iter().map(|f| f.gts.len()).collect::<Vec<_>>(),
            vec![3, 5]
        );
        assert!(frames[0].gts.detections().iter().all(|d| d.score == 1.0));
        assert_eq!(frames[0].timestamp, Some(0.5));
    }

    #[test]
    fn empty_canonical_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(parse_annotations(&p, AnnotationFormat::Canonical, &wt())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unit_error_when_many_records_outside() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.jsonl");
        // Centimeters instead of meters.
        std::fs::write(
            &p,
            "{\"frame_id\":\"0\",\"detections\":[{\"x\":150,\"y\":900},{\"x\":2,\"y\":2}]}\n",
        )
        .unwrap();
        assert!(matches!(
            parse_annotations(&p, AnnotationFormat::Canonical, &wt()),
            Err(DataError::UnitError {
                out_of_bounds: 1,
                total: 2,
                ..
            })
        ));
    }

    #[test]
    fn few_outliers_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.jsonl");
        let mut pts: Vec<String> = (0..10)
            .map(|i| format!("{{\"x\":{i}.0,\"y\":1.0}}"))
            .collect();
        pts.push("{\"x\":-0.2,\"y\":1.0}".into());
        std::fs::write(
            &p,
            format!(
                "{{\"frame_id\":\"0\",\"detections\":[{}]}}\n",
                pts.join(",")
            ),
        )
        .unwrap();
        assert_eq!(
            parse_annotations(&p, AnnotationFormat::Canonical, &wt()).unwrap()[0]
                .gts
                .len(),
            11
        );
    }

    #[test]
    fn wildtrack_position_decoding() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("00000000.json"),
            r#"[{"personID": 1, "positionID": 0, "views": []},
                {"personID": 2, "positionID": 481, "views": []},
                {"personID": 3, "positionID": 691199}]"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("00000005.json"), "[]").unwrap();
        let frames = parse_annotations(dir.path(), AnnotationFormat::WildtrackJson, &wt()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].frame_id, "00000000");
        let p: Vec<_> = frames[0].gts.points().collect();
        assert_eq!(p[0], WorldPoint::new(0.0, 0.0));
        assert!((p[1].x - 0.025).abs() < 1e-12 && (p[1].y - 0.025).abs() < 1e-12);
        assert!((p[2].x - 11.975).abs() < 1e-9 && (p[2].y - 35.975).abs() < 1e-9);
        assert!(frames[1].gts.is_empty());
    }

    #[test]
    fn multiviewx_position_decoding() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("00000001.json");
        std::fs::write(&f, r#"[{"personID": 0, "positionID": 639999}]"#).unwrap();
        let grid: GroundGrid<f64> = GridPreset::Multiviewx.grid();
        let frames = parse_annotations(&f, AnnotationFormat::MultiviewxJson, &grid).unwrap();
        let p = frames[0].gts.points().next().unwrap();
        assert!((p.x - 15.975).abs() < 1e-9 && (p.y - 24.975).abs() < 1e-9);
    }

    #[test]
    fn malformed_upstream_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("a.json", "{\"personID\": 1}"),
            ("b.json", "[{\"personID\": 1}]"),
            ("c.json", "[{\"positionID\": -4}]"),
            ("d.json", "[{\"positionID\": 3}, {\"positionID\": 3}]"),
            ("e.json", "[{\"positionID\": 3"),
        ];
        for (name, body) in cases {
            let f = dir.path().join(name);
            std::fs::write(&f, body).unwrap();
            assert!(
                matches!(
                    parse_annotations(&f, AnnotationFormat::WildtrackJson, &wt()),
                    Err(DataError::Parse { .. })
                ),
                "{name}"
            );
        }
        assert!(matches!(
            parse_annotations(
                &dir.path().join("missing.json"),
                AnnotationFormat::WildtrackJson,
                &wt()
            ),
            Err(DataError::Io { .. })
        ));
    }
}
