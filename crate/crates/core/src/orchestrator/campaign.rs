//! Campaign configuration and the round state machine.
//!
//! Layout of a campaign directory:
//!
//! ```text
//! .lock                 advisory lock held for the duration of a run
//! reference/LS, LT      labels derived from ground truth, when a round uses them
//! baseline/             baseline evaluation, sealed by baseline.json
//! round-01/ ...         labels/, train/, validation/, sealed by round.json
//! summary.json          one row per completed stage
//! ```
//!
//! A stage directory without its seal is incomplete and is rebuilt from
//! scratch. A sealed stage is reused under `--resume` when its recorded
//! input digest matches; the digest covers adapter specs, options, frames,
//! ground truth and the digests of every model the stage consumes.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::adapter::{run_adapter, AdapterSpec};
use super::compose::{compose_training_set, LabelSource};
use super::labels::{
    absolute, create_dir, generate_labels, run_detector, write_json, write_label_set, DetectorJob,
};
use super::protocol::{
    AdapterRole, Invocation, InvocationOptions, Origin, TrainingModeKind, TrainingRequest,
    DETECTIONS_FILE,
};
use super::{AdapterFailure, FailureKind, LabelingOptions, OrchestratorError};
use crate::dataio::{
    render_detections, resolve_path, split_dataset, write_detections, DataError, DatasetManifest,
    FrameRecord, LabelKind, LabelSet, Split, SplitOrdering,
};
use crate::fsio;
use crate::geometry::GroundGrid;
use crate::heatmap::DetectionSet;
use crate::metrics::{evaluate, EvalReport};

const ROUND_RECORD: &str = "round.json";
const BASELINE_RECORD: &str = "baseline.json";
const SUMMARY_FILE: &str = "summary.json";
const LOCK_FILE: &str = ".lock";

/// A model artifact: the previous round's output or a fixed path.
/// Serialized as the string `"previous"` or a path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ModelRef {
    Previous,
    Path(PathBuf),
}

impl From<String> for ModelRef {
    fn from(s: String) -> Self {
        if s == "previous" {
            ModelRef::Previous
        } else {
            ModelRef::Path(PathBuf::from(s))
        }
    }
}

impl From<ModelRef> for String {
    fn from(m: ModelRef) -> Self {
        match m {
            ModelRef::Previous => "previous".into(),
            ModelRef::Path(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingModeSpec {
    pub mode: TrainingModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_model: Option<ModelRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundPlan {
    /// Detector adapter that labels the target training frames.
    pub labeler: String,
    /// `ALT` or `PLT`.
    pub label_kind: LabelKind,
    /// Model for the labeler; `None` runs it untrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler_model: Option<ModelRef>,
    pub training_set: Vec<LabelKind>,
    /// Defaults to FS for the first round and FT from the previous model
    /// afterwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_mode: Option<TrainingModeSpec>,
    pub trainer: String,
    /// Detector adapter that runs the trained model for validation.
    pub detector: String,
}

impl RoundPlan {
    pub fn resolved_mode(&self, index: usize) -> TrainingModeSpec {
        self.training_mode.clone().unwrap_or(if index == 0 {
            TrainingModeSpec {
                mode: TrainingModeKind::FS,
                init_model: None,
            }
        } else {
            TrainingModeSpec {
                mode: TrainingModeKind::FT,
                init_model: Some(ModelRef::Previous),
            }
        })
    }

    /// Summary-table label, e.g. `LS+PLT (FT)`.
    pub fn training_data(&self, index: usize) -> String {
        let parts: Vec<&str> = self.training_set.iter().map(|k| k.tag()).collect();
        format!("{} ({:?})", parts.join("+"), self.resolved_mode(index).mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinePlan {
    pub detector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default = "ls_only")]
    pub training_data: String,
}

fn ls_only() -> String {
    "LS only".into()
}

fn default_eval_split() -> Split {
    Split::Val
}

fn default_target_split() -> Vec<f64> {
    vec![0.8, 0.1, 0.1]
}

fn default_source_split() -> Vec<f64> {
    vec![0.9, 0.1]
}

/// Trainer hyperparameters used when the config gives none.
pub fn default_passthrough() -> serde_json::Value {
    json!({
        "backbone": "resnet18",
        "epochs": 10,
        "batch_size": 1,
        "optimizer": "sgd",
        "learning_rate": 0.0005,
        "momentum": 0.9,
        "weight_decay": 0.0005,
        "lr_scheduler": "one_cycle",
        "max_learning_rate": 0.005
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub output_dir: PathBuf,
    /// Target dataset manifest.
    pub target: PathBuf,
    /// Source dataset manifest, needed for `LS` components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    pub adapters: BTreeMap<String, AdapterSpec>,
    #[serde(default)]
    pub labeling: LabelingOptions,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    /// Applied when the target manifest carries no split.
    #[serde(default = "default_target_split")]
    pub target_split: Vec<f64>,
    /// Applied when the source manifest carries no split.
    #[serde(default = "default_source_split")]
    pub source_split: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselinePlan>,
    #[serde(default)]
    pub rounds: Vec<RoundPlan>,
    #[serde(default = "default_passthrough")]
    pub passthrough: serde_json::Value,
}

impl CampaignConfig {
    /// Reads a config; relative paths resolve against `data_root`, or the
    /// config file's directory when no root is given.
    pub fn load(path: &Path, data_root: Option<&Path>) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| {
            OrchestratorError::Data(DataError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })
        })?;
        let base = match data_root {
            Some(r) => r.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| *p = resolve_path(p, Some(base));
        fix(&mut self.output_dir);
        fix(&mut self.target);
        if let Some(s) = &mut self.source {
            fix(s);
        }
        if let Some(m) = self.baseline.as_mut().and_then(|b| b.model.as_mut()) {
            fix(m);
        }
        for a in self.adapters.values_mut() {
            if let Some(w) = &mut a.workdir {
                fix(w);
            }
        }
        for r in &mut self.rounds {
            let refs = [
                r.labeler_model.as_mut(),
                r.training_mode.as_mut().and_then(|m| m.init_model.as_mut()),
            ];
            for m in refs.into_iter().flatten() {
                if let ModelRef::Path(p) = m {
                    fix(p);
                }
            }
        }
    }

    fn adapter(&self, id: &str, role: AdapterRole) -> Result<&AdapterSpec, OrchestratorError> {
        let spec = self
            .adapters
            .get(id)
            .ok_or_else(|| OrchestratorError::Config(format!("unknown adapter `{id}`")))?;
        if spec.role != role {
            return Err(OrchestratorError::Config(format!(
                "adapter `{id}` has role {:?}, expected {role:?}",
                spec.role
            )));
        }
        Ok(spec)
    }

    /// Static checks that need no file access.
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let cfg = |m: String| Err(OrchestratorError::Config(m));
        let pre = |m: String| Err(OrchestratorError::Precondition(m));
        self.labeling.validate()?;
        for (id, a) in &self.adapters {
            a.validate(id).map_err(OrchestratorError::Config)?;
        }
        if self.rounds.is_empty() && self.baseline.is_none() {
            return cfg("campaign has neither a baseline nor rounds".into());
        }
        if self.eval_split == Split::Train {
            return cfg("eval_split must be val or test".into());
        }
        if let Some(b) = &self.baseline {
            self.adapter(&b.detector, AdapterRole::Detector)?;
        }
        for (i, r) in self.rounds.iter().enumerate() {
            let n = i + 1;
            self.adapter(&r.labeler, AdapterRole::Detector)?;
            self.adapter(&r.trainer, AdapterRole::Trainer)?;
            self.adapter(&r.detector, AdapterRole::Detector)?;
            match (r.label_kind, &r.labeler_model) {
                (LabelKind::AutoLabel, Some(_)) => {
                    return cfg(format!(
                        "round {n}: ALT labels come from an untrained labeler; drop labeler_model"
                    ))
                }
                (LabelKind::PseudoLabel, None) => {
                    return pre(format!("round {n}: PLT labels need a labeler_model"))
                }
                (LabelKind::PseudoLabel, Some(m)) if i > 0 && *m != ModelRef::Previous => {
                    return pre(format!(
                        "round {n}: PLT labels must come from the previous round's model"
                    ))
                }
                (LabelKind::AutoLabel | LabelKind::PseudoLabel, _) => {}
                (k, _) => return cfg(format!("round {n}: label_kind must be ALT or PLT, got {k}")),
            }
            let mode = r.resolved_mode(i);
            let refs = [r.labeler_model.as_ref(), mode.init_model.as_ref()];
            if i == 0 && refs.iter().flatten().any(|m| **m == ModelRef::Previous) {
                return pre("round 1 has no previous model to reference".into());
            }
            match (mode.mode, &mode.init_model) {
                (TrainingModeKind::FT, None) => {
                    return pre(format!("round {n}: FT training requires init_model"))
                }
                (TrainingModeKind::FS, Some(_)) => {
                    return cfg(format!("round {n}: FS training takes no init_model"))
                }
                _ => {}
            }
            for k in &r.training_set {
                if matches!(k, LabelKind::AutoLabel | LabelKind::PseudoLabel) && *k != r.label_kind
                {
                    return Err(OrchestratorError::MissingComponent(*k));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse sealed stages from an earlier run.
    pub resume: bool,
    /// Root for relative annotation paths inside manifests; defaults to
    /// each manifest's directory.
    pub data_root: Option<PathBuf>,
}

/// Sealed record of one round, stored as `round.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_index: usize,
    pub input_digest: String,
    pub label_kind: LabelKind,
    pub training_data: String,
    /// Paths relative to the campaign directory.
    pub labels: String,
    pub label_manifest_digest: String,
    pub model: String,
    pub model_digest: String,
    pub validation: Option<EvalReport>,
    #[serde(skip)]
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaselineRecord {
    input_digest: String,
    training_data: String,
    validation: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Number of completed labeling rounds; 0 for the baseline.
    pub round: usize,
    pub training_data: String,
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl SummaryRow {
    fn new(round: usize, training_data: String, report: Option<&EvalReport>) -> Self {
        Self {
            round,
            training_data,
            moda: report.and_then(|r| r.moda),
            modp: report.and_then(|r| r.modp),
            precision: report.and_then(|r| r.precision),
            recall: report.and_then(|r| r.recall),
        }
    }
}

#[derive(Debug, Default)]
pub struct CampaignOutcome {
    pub baseline: Option<EvalReport>,
    pub rounds: Vec<RoundResult>,
    /// Rows for every completed stage, in order.
    pub rows: Vec<SummaryRow>,
    /// The error that halted the campaign, if any.
    pub failure: Option<OrchestratorError>,
}

struct Dataset {
    manifest: DatasetManifest,
    gt: Option<HashMap<String, DetectionSet<f64>>>,
    gt_digest: String,
}

impl Dataset {
    fn load(
        path: &Path,
        ratios: &[f64],
        data_root: Option<&Path>,
    ) -> Result<Self, OrchestratorError> {
        let mut manifest = DatasetManifest::load(path)?;
        if manifest.split.is_empty() {
            log::info!(
                "{}: no split recorded; applying {ratios:?} in capture order",
                path.display()
            );
            manifest = split_dataset(&manifest, ratios, SplitOrdering::Sequential)?;
        }
        let root = data_root
            .map(Path::to_path_buf)
            .or_else(|| path.parent().map(Path::to_path_buf));
        let annotated = manifest.load_annotations(root.as_deref())?;
        let gt = annotated.map(|frames| {
            frames
                .into_iter()
                .map(|f| (f.frame_id, f.gts))
                .collect::<HashMap<_, _>>()
        });
        let mut hasher_input = String::new();
        if let Some(gt) = &gt {
            for f in &manifest.frames {
                if let Some(set) = gt.get(&f.frame_id) {
                    hasher_input.push_str(&render_detections(std::slice::from_ref(set)));
                }
            }
        }
        Ok(Self {
            gt_digest: fsio::sha256_hex(hasher_input.as_bytes()),
            manifest,
            gt,
        })
    }

    fn frames(&self, split: Split) -> Vec<FrameRecord> {
        self.manifest
            .frames_in(split)
            .into_iter()
            .cloned()
            .collect()
    }

    /// Ground truth for `frames`; frames without annotations count as empty.
    fn ground_truth(&self, frames: &[FrameRecord]) -> Option<Vec<DetectionSet<f64>>> {
        let gt = self.gt.as_ref()?;
        let mut missing = 0usize;
        let sets = frames
            .iter()
            .map(|f| {
                gt.get(&f.frame_id).cloned().unwrap_or_else(|| {
                    missing += 1;
                    DetectionSet::empty(f.frame_id.clone())
                        .expect("manifest frame ids are non-empty")
                })
            })
            .collect();
        if missing > 0 {
            log::warn!(
                "{}: {missing} frame(s) have no annotation record; treated as empty",
                self.manifest.name
            );
        }
        Some(sets)
    }

    fn images(&self) -> HashMap<&str, &[String]> {
        self.manifest
            .frames
            .iter()
            .map(|f| (f.frame_id.as_str(), f.images.as_slice()))
            .collect()
    }
}

/// An opened campaign: inputs loaded, plan checked, directory locked.
pub struct Campaign {
    config: CampaignConfig,
    root: PathBuf,
    resume: bool,
    target: Dataset,
    source: Option<Dataset>,
    references: HashMap<LabelKind, LabelSet>,
    _lock: File,
}

fn model_digest(path: &Path) -> Result<String, OrchestratorError> {
    fsio::digest_path(path).map_err(|e| OrchestratorError::io(path, e))
}

fn read_record<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn reset_dir(path: &Path) -> Result<(), OrchestratorError> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| OrchestratorError::io(path, e))?;
    }
    create_dir(path)
}

impl Campaign {
    pub fn open(config: CampaignConfig, opts: &RunOptions) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let data_root = opts.data_root.as_deref();
        let target = Dataset::load(&config.target, &config.target_split, data_root)?;
        let source = config
            .source
            .as_deref()
            .map(|p| Dataset::load(p, &config.source_split, data_root))
            .transpose()?;
        let campaign_needs =
            |k: LabelKind| config.rounds.iter().any(|r| r.training_set.contains(&k));
        if campaign_needs(LabelKind::SourceLabel)
            && source.as_ref().and_then(|s| s.gt.as_ref()).is_none()
        {
            return Err(OrchestratorError::MissingComponent(LabelKind::SourceLabel));
        }
        if campaign_needs(LabelKind::GroundTruth) && target.gt.is_none() {
            return Err(OrchestratorError::MissingComponent(LabelKind::GroundTruth));
        }
        if target.manifest.frames_in(Split::Train).is_empty() && !config.rounds.is_empty() {
            return Err(OrchestratorError::Precondition(
                "target dataset has no training frames".into(),
            ));
        }
        if target.gt.is_none() {
            log::warn!("target dataset has no annotations; validation metrics will be undefined");
        }
        let mut fixed: Vec<&Path> = config
            .baseline
            .iter()
            .filter_map(|b| b.model.as_deref())
            .collect();
        for r in &config.rounds {
            for m in [
                r.labeler_model.as_ref(),
                r.training_mode.as_ref().and_then(|t| t.init_model.as_ref()),
            ] {
                if let Some(ModelRef::Path(p)) = m {
                    fixed.push(p);
                }
            }
        }
        if let Some(p) = fixed.iter().find(|p| !p.exists()) {
            return Err(OrchestratorError::Precondition(format!(
                "model {} does not exist",
                p.display()
            )));
        }

        let root = absolute(&config.output_dir)?;
        create_dir(&root)?;
        let lock_path = root.join(LOCK_FILE);
        let lock = File::create(&lock_path).map_err(|e| OrchestratorError::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => {
                return Err(OrchestratorError::Locked(root.display().to_string()))
            }
            Err(std::fs::TryLockError::Error(e)) => {
                return Err(OrchestratorError::io(&lock_path, e))
            }
        }
        if !opts.resume {
            let occupied = std::fs::read_dir(&root)
                .map_err(|e| OrchestratorError::io(&root, e))?
                .filter_map(Result::ok)
                .any(|e| e.file_name() != LOCK_FILE);
            if occupied {
                return Err(OrchestratorError::CampaignExists(
                    root.display().to_string(),
                ));
            }
        }
        Ok(Self {
            config,
            root,
            resume: opts.resume,
            target,
            source,
            references: HashMap::new(),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    /// Runs every stage in order, stopping at the first failure. Completed
    /// stages are kept on disk and in the outcome.
    pub fn run(&mut self) -> CampaignOutcome {
        let mut outcome = CampaignOutcome::default();
        if let Err(e) = self.prepare_references() {
            outcome.failure = Some(e);
            return outcome;
        }
        if let Some(plan) = self.config.baseline.clone() {
            match self.run_baseline(&plan) {
                Ok(report) => {
                    outcome.rows.push(SummaryRow::new(
                        0,
                        plan.training_data.clone(),
                        report.as_ref(),
                    ));
                    outcome.baseline = report;
                }
                Err(e) => {
                    outcome.failure = Some(e);
                    return self.finish(outcome);
                }
            }
            if let Err(e) = self.write_summary(&outcome.rows) {
                outcome.failure = Some(e);
                return outcome;
            }
        }
        let mut previous: Option<PathBuf> = None;
        for index in 0..self.config.rounds.len() {
            match self.run_round(index, previous.as_deref()) {
                Ok(result) => {
                    log::info!(
                        "round {} {}: MODA {}",
                        index + 1,
                        if result.cached { "reused" } else { "done" },
                        crate::metrics::display_metric(
                            result.validation.as_ref().and_then(|v| v.moda)
                        )
                    );
                    previous = Some(self.root.join(&result.model));
                    outcome.rows.push(SummaryRow::new(
                        index + 1,
                        result.training_data.clone(),
                        result.validation.as_ref(),
                    ));
                    outcome.rounds.push(result);
                    if let Err(e) = self.write_summary(&outcome.rows) {
                        outcome.failure = Some(e);
                        return outcome;
                    }
                }
                Err(e) => {
                    log::error!("round {} failed: {e}", index + 1);
                    outcome.failure = Some(e);
                    break;
                }
            }
        }
        self.finish(outcome)
    }

    fn finish(&self, mut outcome: CampaignOutcome) -> CampaignOutcome {
        if let Err(e) = self.write_summary(&outcome.rows) {
            outcome.failure.get_or_insert(e);
        }
        outcome
    }

    fn write_summary(&self, rows: &[SummaryRow]) -> Result<(), OrchestratorError> {
        write_json(&self.root.join(SUMMARY_FILE), &rows)
    }

    /// Writes LS / LT label sets from ground truth when any round uses them.
    fn prepare_references(&mut self) -> Result<(), OrchestratorError> {
        let needs = |k: LabelKind| {
            self.config
                .rounds
                .iter()
                .any(|r| r.training_set.contains(&k))
        };
        let mut wanted = Vec::new();
        if needs(LabelKind::SourceLabel) {
            wanted.push((
                LabelKind::SourceLabel,
                self.source.as_ref().expect("checked at open"),
            ));
        }
        if needs(LabelKind::GroundTruth) {
            wanted.push((LabelKind::GroundTruth, &self.target));
        }
        for (kind, data) in wanted {
            let frames = data.frames(Split::Train);
            let sets = data.ground_truth(&frames).expect("checked at open");
            let dir = self.root.join("reference").join(kind.tag());
            create_dir(&dir)?;
            let set = write_label_set(
                &dir,
                kind,
                &sets,
                &data.manifest.grid(),
                &self.config.labeling,
                None,
            )?;
            self.references.insert(kind, set);
        }
        Ok(())
    }

    fn eval_frames(&self) -> Vec<FrameRecord> {
        self.target.frames(self.config.eval_split)
    }

    fn target_grid(&self) -> GroundGrid<f64> {
        self.target.manifest.grid()
    }

    /// Runs `detector` with `model` on the evaluation split, writing
    /// detections and the report under `dir`.
    fn validate_model(
        &self,
        detector: &str,
        model: Option<&Path>,
        dir: &Path,
    ) -> Result<Option<EvalReport>, OrchestratorError> {
        let frames = self.eval_frames();
        if frames.is_empty() {
            log::warn!("evaluation split is empty; skipping validation");
            return Ok(None);
        }
        let grid = self.target_grid();
        let job = DetectorJob {
            adapter_id: detector,
            adapter: &self.config.adapters[detector],
            model,
            frames: &frames,
            grid: &grid,
            options: &self.config.labeling,
        };
        let dets = run_detector(&job, &dir.join("run"))?;
        let dets_path = dir.join(DETECTIONS_FILE);
        write_detections(&dets_path, &dets)?;
        let Some(gts) = self.target.ground_truth(&frames) else {
            return Ok(None);
        };
        let pairs: Vec<_> = dets.into_iter().zip(gts).collect();
        let report = evaluate(&pairs, self.config.labeling.match_radius)?;
        write_json(&dir.join("report.json"), &report)?;
        Ok(Some(report))
    }

    fn eval_digest(&self) -> serde_json::Value {
        json!({
            "frames": self.eval_frames(),
            "ground_truth": self.target.gt_digest,
            "match_radius": self.config.labeling.match_radius,
        })
    }

    fn run_baseline(&self, plan: &BaselinePlan) -> Result<Option<EvalReport>, OrchestratorError> {
        let dir = self.root.join("baseline");
        let model_digest = plan.model.as_deref().map(model_digest).transpose()?;
        let digest = fsio::sha256_hex(
            json!({
                "detector": self.config.adapters[&plan.detector].digest(),
                "model": model_digest,
                "grid": self.target_grid(),
                "labeling": self.config.labeling,
                "eval": self.eval_digest(),
            })
            .to_string()
            .as_bytes(),
        );
        if self.resume {
            if let Some(rec) = read_record::<BaselineRecord>(&dir.join(BASELINE_RECORD)) {
                if rec.input_digest == digest {
                    log::info!("baseline reused from {}", dir.display());
                    return Ok(rec.validation);
                }
            }
        }
        reset_dir(&dir)?;
        let validation = self.validate_model(
            &plan.detector,
            plan.model.as_deref(),
            &dir.join("validation"),
        )?;
        write_json(
            &dir.join(BASELINE_RECORD),
            &BaselineRecord {
                input_digest: digest,
                training_data: plan.training_data.clone(),
                validation: validation.clone(),
            },
        )?;
        Ok(validation)
    }

    fn resolve_model(
        &self,
        m: &ModelRef,
        previous: Option<&Path>,
    ) -> Result<PathBuf, OrchestratorError> {
        match m {
            ModelRef::Path(p) => Ok(p.clone()),
            ModelRef::Previous => previous.map(Path::to_path_buf).ok_or_else(|| {
                OrchestratorError::Precondition("no previous model available".into())
            }),
        }
    }

    fn run_round(
        &self,
        index: usize,
        previous: Option<&Path>,
    ) -> Result<RoundResult, OrchestratorError> {
        let plan = &self.config.rounds[index];
        let name = format!("round-{:02}", index + 1);
        let dir = self.root.join(&name);
        let mode = plan.resolved_mode(index);
        let labeler_model = plan
            .labeler_model
            .as_ref()
            .map(|m| self.resolve_model(m, previous))
            .transpose()?;
        let init_model = mode
            .init_model
            .as_ref()
            .map(|m| self.resolve_model(m, previous))
            .transpose()?;
        let init_digest = init_model.as_deref().map(model_digest).transpose()?;

        let train_frames = self.target.frames(Split::Train);
        let grid = self.target_grid();
        let job = DetectorJob {
            adapter_id: &plan.labeler,
            adapter: &self.config.adapters[&plan.labeler],
            model: labeler_model.as_deref(),
            frames: &train_frames,
            grid: &grid,
            options: &self.config.labeling,
        };
        let ref_digests: BTreeMap<&str, String> = self
            .references
            .iter()
            .filter(|(k, _)| plan.training_set.contains(k))
            .map(|(k, set)| {
                (
                    k.tag(),
                    fsio::sha256_hex(&serde_json::to_vec(set).expect("label set serializes")),
                )
            })
            .collect();
        let digest = fsio::sha256_hex(
            json!({
                "round": index,
                "plan": plan,
                "mode": mode,
                "labels": job.input_digest()?,
                "trainer": self.config.adapters[&plan.trainer].digest(),
                "detector": self.config.adapters[&plan.detector].digest(),
                "init_model": init_digest,
                "references": ref_digests,
                "labeling": self.config.labeling,
                "passthrough": self.config.passthrough,
                "eval": self.eval_digest(),
            })
            .to_string()
            .as_bytes(),
        );
        if self.resume {
            if let Some(mut rec) = read_record::<RoundResult>(&dir.join(ROUND_RECORD)) {
                let model_ok =
                    model_digest(&self.root.join(&rec.model)).is_ok_and(|d| d == rec.model_digest);
                if rec.input_digest == digest && model_ok {
                    rec.cached = true;
                    return Ok(rec);
                }
                log::info!("{name}: inputs changed; recomputing");
            }
        }
        let started = Instant::now();
        reset_dir(&dir)?;

        let labels_dir = dir.join("labels");
        let labels = generate_labels(&job, plan.label_kind, index, &labels_dir)?;
        labels.validate(&self.target.manifest)?;

        let labels_rel = format!("{name}/labels");
        let mut available = vec![LabelSource {
            origin: Origin::Target,
            dir: &labels_rel,
            set: &labels,
        }];
        let ls_dir = format!("reference/{}", LabelKind::SourceLabel.tag());
        let lt_dir = format!("reference/{}", LabelKind::GroundTruth.tag());
        if let Some(set) = self.references.get(&LabelKind::SourceLabel) {
            available.push(LabelSource {
                origin: Origin::Source,
                dir: &ls_dir,
                set,
            });
        }
        if let Some(set) = self.references.get(&LabelKind::GroundTruth) {
            available.push(LabelSource {
                origin: Origin::Target,
                dir: &lt_dir,
                set,
            });
        }
        let mut training = compose_training_set(&plan.training_set, &available)?;
        let target_images = self.target.images();
        let source_images = self
            .source
            .as_ref()
            .map(Dataset::images)
            .unwrap_or_default();
        for e in &mut training.entries {
            let lookup = match e.origin {
                Origin::Target => &target_images,
                Origin::Source => &source_images,
            };
            e.images = lookup
                .get(e.frame_id.as_str())
                .map(|i| i.to_vec())
                .unwrap_or_default();
        }
        let train_dir = dir.join("train");
        let output_dir = train_dir.join("output");
        create_dir(&output_dir)?;
        let training_manifest = train_dir.join("manifest.json");
        write_json(&training_manifest, &training)?;
        let model_out = train_dir.join("model");
        let invocation = Invocation {
            role: AdapterRole::Trainer,
            frames: Vec::new(),
            grid: grid.clone(),
            output_dir: output_dir.display().to_string(),
            options: InvocationOptions {
                min_prob: self.config.labeling.min_prob,
                nms_radius: self.config.labeling.nms_radius,
            },
            model: None,
            training: Some(TrainingRequest {
                manifest: training_manifest.display().to_string(),
                root: self.root.display().to_string(),
                mode: mode.mode,
                init_model: init_model
                    .as_deref()
                    .map(absolute)
                    .transpose()?
                    .map(|p| p.display().to_string()),
                model_out: model_out.display().to_string(),
            }),
            passthrough: self.config.passthrough.clone(),
        };
        let inv_path = train_dir.join("invocation.json");
        write_json(&inv_path, &invocation)?;
        run_adapter(
            &plan.trainer,
            &self.config.adapters[&plan.trainer],
            &inv_path,
            &output_dir,
            &train_dir.join("adapter"),
        )?;
        if !model_out.exists() {
            return Err(OrchestratorError::Adapter(AdapterFailure {
                adapter: plan.trainer.clone(),
                kind: FailureKind::MalformedOutput(format!(
                    "no model written to {}",
                    model_out.display()
                )),
                stderr: String::new(),
            }));
        }
        let validation =
            self.validate_model(&plan.detector, Some(&model_out), &dir.join("validation"))?;
        let result = RoundResult {
            round_index: index,
            input_digest: digest,
            label_kind: plan.label_kind,
            training_data: plan.training_data(index),
            label_manifest_digest: model_digest(&labels_dir.join(super::labels::LABEL_MANIFEST))?,
            labels: labels_rel,
            model: format!("{name}/train/model"),
            model_digest: model_digest(&model_out)?,
            validation,
            cached: false,
        };
        write_json(
            &dir.join("timing.json"),
            &json!({ "elapsed_secs": started.elapsed().as_secs_f64() }),
        )?;
        write_json(&dir.join(ROUND_RECORD), &result)?;
        Ok(result)
    }
}

/// Opens the campaign and runs it.
pub fn run_campaign(
    config: CampaignConfig,
    opts: &RunOptions,
) -> Result<CampaignOutcome, OrchestratorError> {
    let mut campaign = Campaign::open(config, opts)?;
    Ok(campaign.run())
}
