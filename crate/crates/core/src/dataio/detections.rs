//! Canonical detection exchange format: JSON lines, one frame per line,
//! `{"frame_id": "...", "detections": [{"x": m, "y": m, "score": s}, ...]}`.
//!
//! Floats are written in shortest round-trip form, so reading back yields
//! bit-identical values.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::fsio;
use crate::heatmap::{Detection, DetectionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame_id: String,
    pub detections: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

/// Parses JSON-lines records; blank lines are skipped. `source` names the
/// input in diagnostics.
pub(crate) fn parse_records(
    text: &str,
    source: &str,
) -> Result<Vec<(usize, DetectionRecord)>, DataError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord = serde_json::from_str(line)
            .map_err(|e| DataError::parse(source, line_no, e.to_string()))?;
        if !seen.insert(record.frame_id.clone()) {
            return Err(DataError::DuplicateFrame {
                path: source.to_string(),
                line: line_no,
                frame_id: record.frame_id,
            });
        }
        out.push((line_no, record));
    }
    Ok(out)
}

pub fn parse_detections(text: &str, source: &str) -> Result<Vec<DetectionSet<f64>>, DataError> {
    parse_records(text, source)?
        .into_iter()
        .map(|(line, r)| {
            let dets = r
                .detections
                .iter()
                .map(|p| Detection::new(p.x, p.y, p.score.unwrap_or(1.0)))
                .collect();
            DetectionSet::new(r.frame_id, dets)
                .map_err(|e| DataError::parse(source, line, e.to_string()))
        })
        .collect()
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionSet<f64>>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_detections(&text, &path.display().to_string())
}

pub fn render_detections(frames: &[DetectionSet<f64>]) -> String {
    let mut out = String::new();
    for f in frames {
        let record = DetectionRecord {
            frame_id: f.frame_id().to_string(),
            detections: f
                .detections()
                .iter()
                .map(|d| PointRecord {
                    x: d.location.x,
                    y: d.location.y,
                    score: Some(d.score),
                })
                .collect(),
            timestamp: None,
        };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Atomically writes `frames` as JSON lines.
pub fn write_detections(path: &Path, frames: &[DetectionSet<f64>]) -> Result<(), DataError> {
    fsio::atomic_write(path, render_detections(frames).as_bytes())
        .map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        write_detections(&p, &[]).unwrap();
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);
        assert!(read_detections(&p).unwrap().is_empty());
    }

    #[test]
    fn single_detection_is_bit_faithful() {
        let f = DetectionSet::new("0", vec![Detection::new(1.25, 3.5, 0.87)]).unwrap();
        let text = render_detections(std::slice::from_ref(&f));
        assert_eq!(
            text,
            "{\"frame_id\":\"0\",\"detections\":[{\"x\":1.25,\"y\":3.5,\"score\":0.87}]}\n"
        );
        let back = parse_detections(&text, "mem").unwrap();
        assert_eq!(back, vec![f]);
    }

    #[test]
    fn duplicate_frames_rejected() {
        let text =
            "{\"frame_id\":\"a\",\"detections\":[]}\n{\"frame_id\":\"a\",\"detections\":[]}\n";
        match parse_detections(text, "x.jsonl") {
            Err(DataError::DuplicateFrame { line, frame_id, .. }) => {
                assert_eq!((line, frame_id.as_str()), (2, "a"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = [
            ("{\"frame_id\":\"a\",\"detections\":[]}\n{oops\n", 2),
            ("\n\n{\"frame_id\":\"a\"}\n", 3),
            (
                "{\"frame_id\":\"a\",\"detections\":[{\"x\":1,\"y\":1},{\"x\":1,\"y\":1}]}",
                1,
            ),
            (
                "{\"frame_id\":\"a\",\"detections\":[{\"x\":1,\"y\":1,\"score\":2}]}",
                1,
            ),
            ("{\"frame_id\":\"\",\"detections\":[]}", 1),
            (
                "{\"frame_id\":\"a\",\"detections\":[{\"x\":\"1\",\"y\":1}]}",
                1,
            ),
            ("{\"frame_id\":\"a\",\"detections\":[],\"extra\":1}", 1),
            ("[1,2,3]", 1),
        ];
        for (text, line) in cases {
            match parse_detections(text, "in") {
                Err(DataError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_preserves_values(
            frames in proptest::collection::vec(
                proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 0.0f64..=1.0), 0..8), 0..6)
        ) {
            let sets: Vec<_> = frames.iter().enumerate().map(|(i, dets)| {
                let mut uniq: Vec<Detection<f64>> = Vec::new();
                for &(x, y, s) in dets {
                    if !uniq.iter().any(|d| d.location.x == x && d.location.y == y) {
                        uniq.push(Detection::new(x, y, s));
                    }
                }
                DetectionSet::new(format!("f{i}"), uniq).unwrap()
            }).collect();
            let back = parse_detections(&render_detections(&sets), "mem").unwrap();
            prop_assert_eq!(back, sets);
        }
    }
}
