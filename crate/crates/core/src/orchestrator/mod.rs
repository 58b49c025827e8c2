//! Multi-round automatic labeling.
//!
//! Detectors and trainers are external programs driven through JSON
//! invocation files (see [`protocol`]). A campaign runs a baseline
//! evaluation and a sequence of rounds; each round labels the target
//! training frames, composes a training set, trains a model and validates
//! it. Every round is written to its own directory and sealed by an atomic
//! `round.json` record, which also acts as the cache entry for `--resume`.

mod adapter;
mod campaign;
mod compose;
mod labels;
pub mod protocol;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, LabelKind};
use crate::heatmap::{ExtractOptions, HeatmapError, KernelSpec, NmsCandidates};
use crate::metrics::{MetricsError, DEFAULT_MATCH_RADIUS};

pub use adapter::{run_adapter, AdapterSpec};
pub use campaign::{
    default_passthrough, run_campaign, BaselinePlan, Campaign, CampaignConfig, CampaignOutcome,
    ModelRef, RoundPlan, RoundResult, RunOptions, SummaryRow, TrainingModeSpec,
};
pub use compose::{compose_training_set, LabelSource};
pub use labels::{generate_labels, run_detector, write_label_set, DetectorJob};
pub use protocol::{
    AdapterRole, Invocation, Origin, TrainingEntry, TrainingManifest, TrainingModeKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FailureKind {
    Spawn(String),
    ExitCode { code: Option<i32> },
    Timeout { secs: f64 },
    MalformedOutput(String),
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureKind::Spawn(m) => write!(f, "could not launch: {m}"),
            FailureKind::ExitCode { code: Some(c) } => write!(f, "exited with status {c}"),
            FailureKind::ExitCode { code: None } => write!(f, "killed by a signal"),
            FailureKind::Timeout { secs } => write!(f, "timed out after {secs} s"),
            FailureKind::MalformedOutput(m) => write!(f, "malformed output: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("adapter `{adapter}` {kind}{}", stderr_suffix(.stderr))]
pub struct AdapterFailure {
    pub adapter: String,
    pub kind: FailureKind,
    /// Tail of the adapter's stderr.
    pub stderr: String,
}

fn stderr_suffix(s: &str) -> String {
    let s = s.trim_end();
    if s.is_empty() {
        String::new()
    } else {
        format!("; stderr:\n{s}")
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Adapter(#[from] AdapterFailure),
    #[error("adapter `{adapter}` produced no output for {} frame(s): {}", missing.len(), preview(missing))]
    Coverage {
        adapter: String,
        missing: Vec<String>,
    },
    #[error("training set needs {0} labels but none were produced")]
    MissingComponent(LabelKind),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("campaign directory {0} is locked by another run")]
    Locked(String),
    #[error("campaign directory {0} already holds results; pass --resume to reuse them")]
    CampaignExists(String),
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

impl OrchestratorError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        OrchestratorError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Whether the failure originates in an external adapter.
    pub fn is_adapter_failure(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Adapter(_) | OrchestratorError::Coverage { .. }
        )
    }
}

/// Label generation and evaluation parameters shared by every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingOptions {
    pub min_prob: f64,
    pub nms_radius: f64,
    pub candidates: NmsCandidates,
    pub kernel: KernelSpec,
    pub match_radius: f64,
}

impl Default for LabelingOptions {
    fn default() -> Self {
        Self {
            min_prob: ExtractOptions::<f64>::DEFAULT_MIN_PROB,
            nms_radius: ExtractOptions::<f64>::DEFAULT_NMS_RADIUS,
            candidates: NmsCandidates::default(),
            kernel: KernelSpec::default(),
            match_radius: DEFAULT_MATCH_RADIUS,
        }
    }
}

impl LabelingOptions {
    pub fn extract(&self) -> ExtractOptions<f64> {
        ExtractOptions::new(self.min_prob, self.nms_radius).with_candidates(self.candidates)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        self.extract().validate()?;
        self.kernel.build::<f64>()?;
        if !(self.match_radius > 0.0 && self.match_radius.is_finite()) {
            return Err(OrchestratorError::Config(format!(
                "match_radius must be positive, got {}",
                self.match_radius
            )));
        }
        Ok(())
    }
}
