use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{is_safe_frame_id, resolve_path, AnnotatedFrame, AnnotationFormat, DataError};
use crate::fsio;
use crate::geometry::{CalibrationFile, GridSpec, GroundGrid};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SplitOrdering {
    /// Partition in capture order.
    #[default]
    Sequential,
    /// Fisher–Yates shuffle of the frame order by `seed`, then partition.
    Seeded { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: String,
    #[serde(flatten)]
    pub calibration: CalibrationFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: String,
    /// One image path per camera, in camera order.
    #[serde(default)]
    pub images: Vec<String>,
}

/// Ground truth for the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSource {
    pub path: PathBuf,
    pub format: AnnotationFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub cameras: Vec<CameraEntry>,
    /// Capture order.
    pub frames: Vec<FrameRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationSource>,
    #[serde(default)]
    pub split: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn grid(&self) -> GroundGrid<f64> {
        self.grid.resolve()
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        fsio::atomic_write(path, &bytes).map_err(|e| DataError::io(path, e))
    }

    /// Unique, file-safe frame ids; a non-empty split covers every frame
    /// exactly once; camera calibrations are valid.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidManifest(m));
        let mut ids = HashSet::with_capacity(self.frames.len());
        for f in &self.frames {
            if !is_safe_frame_id(&f.frame_id) {
                return bad(format!(
                    "frame id `{}` must be non-empty [A-Za-z0-9._-]",
                    f.frame_id
                ));
            }
            if !ids.insert(f.frame_id.as_str()) {
                return bad(format!("duplicate frame `{}`", f.frame_id));
            }
        }
        if !self.split.is_empty() {
            if let Some(f) = self
                .frames
                .iter()
                .find(|f| !self.split.contains_key(&f.frame_id))
            {
                return bad(format!("frame `{}` has no split label", f.frame_id));
            }
            if let Some(id) = self.split.keys().find(|k| !ids.contains(k.as_str())) {
                return bad(format!("split labels unknown frame `{id}`"));
            }
        }
        for cam in &self.cameras {
            cam.calibration
                .to_calibration::<f64>()
                .map_err(|e| DataError::InvalidManifest(format!("camera `{}`: {e}", cam.id)))?;
        }
        Ok(())
    }

    /// Frames labeled `split`, in capture order.
    pub fn frames_in(&self, split: Split) -> Vec<&FrameRecord> {
        self.frames
            .iter()
            .filter(|f| self.split.get(&f.frame_id) == Some(&split))
            .collect()
    }

    pub fn contains_frame(&self, id: &str) -> bool {
        self.frames.iter().any(|f| f.frame_id == id)
    }

    /// Parses the dataset's ground truth, resolving a relative annotation
    /// path against `root` when given.
    pub fn load_annotations(
        &self,
        root: Option<&Path>,
    ) -> Result<Option<Vec<AnnotatedFrame>>, DataError> {
        match &self.annotations {
            None => Ok(None),
            Some(src) => {
                let path = resolve_path(&src.path, root);
                super::parse_annotations(&path, src.format, &self.grid()).map(Some)
            }
        }
    }
}

/// Assigns Train / Val / Test labels. `ratios` has one to three entries in
/// that order and must sum to 1. Val and Test counts are `floor(n·ratio)`;
/// the remainder goes to Train.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: &[f64],
    ordering: SplitOrdering,
) -> Result<DatasetManifest, DataError> {
    let bad = |m: String| Err(DataError::InvalidRatios(m));
    if ratios.is_empty() || ratios.len() > 3 {
        return bad(format!("expected 1 to 3 ratios, got {}", ratios.len()));
    }
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return bad(format!(
            "ratios must be finite and non-negative: {ratios:?}"
        ));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return bad(format!("ratios sum to {sum}, expected 1"));
    }
    let n = manifest.frames.len();
    let mut counts = [0usize; 3];
    for (i, r) in ratios.iter().enumerate().skip(1) {
        // The epsilon keeps e.g. 0.29·100 from flooring to 28.
        counts[i] = ((n as f64) * r + 1e-9).floor() as usize;
    }
    counts[0] = n - counts[1] - counts[2];
    for (i, r) in ratios.iter().enumerate() {
        if *r > 0.0 && counts[i] == 0 {
            return bad(format!(
                "ratio {r} for {:?} gives no frames out of {n}",
                Split::ALL[i]
            ));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    if let SplitOrdering::Seeded { seed } = ordering {
        Stream::new(seed).shuffle(&mut order);
    }
    let mut split = BTreeMap::new();
    let mut cursor = 0;
    for (label, count) in Split::ALL.iter().zip(counts) {
        for &idx in &order[cursor..cursor + count] {
            split.insert(manifest.frames[idx].frame_id.clone(), *label);
        }
        cursor += count;
    }
    Ok(DatasetManifest {
        split,
        ..manifest.clone()
    })
}
