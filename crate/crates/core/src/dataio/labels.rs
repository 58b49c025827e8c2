use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetManifest};

/// Training-data taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    /// Labeled target data (ground truth).
    #[serde(rename = "LT")]
    GroundTruth,
    /// Labeled source data.
    #[serde(rename = "LS")]
    SourceLabel,
    /// Target data pseudo-labeled by a supervised detector.
    #[serde(rename = "PLT")]
    PseudoLabel,
    /// Target data labeled by an untrained detector.
    #[serde(rename = "ALT")]
    AutoLabel,
}

impl LabelKind {
    pub fn tag(self) -> &'static str {
        match self {
            LabelKind::GroundTruth => "LT",
            LabelKind::SourceLabel => "LS",
            LabelKind::PseudoLabel => "PLT",
            LabelKind::AutoLabel => "ALT",
        }
    }

    pub fn needs_provenance(self) -> bool {
        matches!(self, LabelKind::PseudoLabel | LabelKind::AutoLabel)
    }

    pub fn is_target(self) -> bool {
        !matches!(self, LabelKind::SourceLabel)
    }
}

impl std::fmt::Display for LabelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LT" => Ok(LabelKind::GroundTruth),
            "LS" => Ok(LabelKind::SourceLabel),
            "PLT" => Ok(LabelKind::PseudoLabel),
            "ALT" => Ok(LabelKind::AutoLabel),
            _ => Err(format!(
                "unknown label kind `{s}` (expected LT, LS, PLT or ALT)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub adapter_id: String,
    pub command_digest: String,
    pub input_digest: String,
    pub round: usize,
}

/// Label file references for one frame, relative to the label set's
/// directory, with content digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub frame_id: String,
    pub detections_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_digest: Option<String>,
}

/// Per-frame labels of one kind. The serialized form (the label manifest)
/// omits provenance, which is stored beside it, so identical labels produce
/// identical manifests regardless of which round made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub kind: LabelKind,
    /// JSON-lines file holding every frame's detections.
    pub detections: String,
    pub entries: Vec<LabelEntry>,
    #[serde(skip)]
    pub provenance: Option<Provenance>,
}

impl LabelSet {
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<(), DataError> {
        if self.kind.needs_provenance() && self.provenance.is_none() {
            return Err(DataError::InvalidLabelSet(format!(
                "{} labels require provenance",
                self.kind
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !manifest.contains_frame(&e.frame_id) {
                return Err(DataError::InvalidLabelSet(format!(
                    "frame `{}` is not in dataset `{}`",
                    e.frame_id, manifest.name
                )));
            }
            if !seen.insert(e.frame_id.as_str()) {
                return Err(DataError::InvalidLabelSet(format!(
                    "frame `{}` labeled twice",
                    e.frame_id
                )));
            }
        }
        Ok(())
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.frame_id.as_str())
    }
}
