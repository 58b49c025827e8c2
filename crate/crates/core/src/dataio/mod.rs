//! File formats and dataset bookkeeping.
//!
//! All coordinates stored in files are world meters, never cells.

mod annotations;
mod detections;
mod labels;
mod manifest;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use annotations::{parse_annotations, AnnotatedFrame, AnnotationFormat};
pub use detections::{
    parse_detections, read_detections, render_detections, write_detections, DetectionRecord,
    PointRecord,
};
pub use labels::{LabelEntry, LabelKind, LabelSet, Provenance};
pub use manifest::{
    split_dataset, AnnotationSource, CameraEntry, DatasetManifest, FrameRecord, Split,
    SplitOrdering,
};

/// Environment variable that prefixes relative paths in configs and manifests.
pub const DATA_ROOT_ENV: &str = "MVLABEL_DATA_ROOT";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate frame `{frame_id}`")]
    DuplicateFrame {
        path: String,
        line: usize,
        frame_id: String,
    },
    #[error(
        "{path}: {out_of_bounds} of {total} records fall outside the grid; wrong units or format?"
    )]
    UnitError {
        path: String,
        out_of_bounds: usize,
        total: usize,
    },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Joins relative `path` onto `root` when one is given.
pub fn resolve_path(path: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

/// Data root from [`DATA_ROOT_ENV`], if set and non-empty.
pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Frame ids double as file stems for per-frame artifacts.
pub fn is_safe_frame_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
