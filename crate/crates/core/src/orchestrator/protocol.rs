//! Adapter wire protocol.
//!
//! For every launch the orchestrator writes an [`Invocation`] JSON file and
//! runs the adapter command with `{invocation}` and `{output_dir}` expanded
//! in its arguments (the invocation path is also exported as
//! `MVLABEL_INVOCATION`). Exit code 0 means success; stdout and stderr are
//! captured beside the invocation file.
//!
//! Detector output, inside `output_dir`: either `detections.jsonl`
//! (canonical detection lines) or one `<frame_id>.mvhm` raster per frame.
//! When both exist the detections file wins. Rasters are reduced to
//! locations with the invocation's `options`.
//!
//! Trainer output: the model artifact (file or directory) at
//! `training.model_out`. Paths inside the training manifest are relative to
//! `training.root`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::LabelKind;
use crate::geometry::GroundGrid;

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const RASTER_EXTENSION: &str = "mvhm";
pub const INVOCATION_ENV: &str = "MVLABEL_INVOCATION";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterRole {
    Detector,
    Trainer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationFrame {
    pub frame_id: String,
    #[serde(default)]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvocationOptions {
    pub min_prob: f64,
    pub nms_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingModeKind {
    /// From scratch, random initialization.
    FS,
    /// Fine-tune from `init_model`.
    FT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRequest {
    pub manifest: String,
    pub root: String,
    pub mode: TrainingModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_model: Option<String>,
    pub model_out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub role: AdapterRole,
    pub frames: Vec<InvocationFrame>,
    pub grid: GroundGrid<f64>,
    pub output_dir: String,
    pub options: InvocationOptions,
    /// Detector only: model artifact to load; absent for untrained detectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingRequest>,
    /// Opaque trainer hyperparameters, passed through verbatim.
    #[serde(default)]
    pub passthrough: serde_json::Value,
}

impl Invocation {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Source,
    Target,
}

/// One training sample: a frame and its label files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingEntry {
    pub frame_id: String,
    pub origin: Origin,
    pub tag: LabelKind,
    pub detections: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<String>,
    #[serde(default)]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub components: Vec<LabelKind>,
    pub entries: Vec<TrainingEntry>,
}

impl TrainingManifest {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
