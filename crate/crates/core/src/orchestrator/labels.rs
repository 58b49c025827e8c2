//! Running detectors and turning their output into label sets.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::adapter::{run_adapter, AdapterSpec};
use super::protocol::{
    AdapterRole, Invocation, InvocationFrame, InvocationOptions, DETECTIONS_FILE, RASTER_EXTENSION,
};
use super::{AdapterFailure, FailureKind, LabelingOptions, OrchestratorError};
use crate::dataio::{
    read_detections, render_detections, FrameRecord, LabelEntry, LabelKind, LabelSet, Provenance,
};
use crate::fsio;
use crate::geometry::GroundGrid;
use crate::heatmap::raster::{encode, read_raster_file};
use crate::heatmap::{extract_locations_with, label_pipeline, DetectionSet, OutOfBoundsPolicy};

pub const LABEL_MANIFEST: &str = "manifest.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// One detector launch over a list of frames.
#[derive(Debug, Clone, Copy)]
pub struct DetectorJob<'a> {
    pub adapter_id: &'a str,
    pub adapter: &'a AdapterSpec,
    pub model: Option<&'a Path>,
    pub frames: &'a [FrameRecord],
    pub grid: &'a GroundGrid<f64>,
    pub options: &'a LabelingOptions,
}

#[derive(Serialize)]
struct JobDigest<'a> {
    adapter: String,
    model: Option<String>,
    frames: &'a [FrameRecord],
    grid: &'a GroundGrid<f64>,
    min_prob: f64,
    nms_radius: f64,
    candidates: crate::heatmap::NmsCandidates,
}

impl DetectorJob<'_> {
    /// Digest of everything the job's output depends on.
    pub fn input_digest(&self) -> Result<String, OrchestratorError> {
        let model = self
            .model
            .map(|m| fsio::digest_path(m).map_err(|e| OrchestratorError::io(m, e)))
            .transpose()?;
        let d = JobDigest {
            adapter: self.adapter.digest(),
            model,
            frames: self.frames,
            grid: self.grid,
            min_prob: self.options.min_prob,
            nms_radius: self.options.nms_radius,
            candidates: self.options.candidates,
        };
        Ok(fsio::sha256_hex(
            &serde_json::to_vec(&d).expect("digest input serializes"),
        ))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    fsio::atomic_write(path, &bytes).map_err(|e| OrchestratorError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), OrchestratorError> {
    std::fs::create_dir_all(path).map_err(|e| OrchestratorError::io(path, e))
}

/// Runs the detector in `work_dir` and returns one detection set per
/// requested frame, in request order.
pub fn run_detector(
    job: &DetectorJob,
    work_dir: &Path,
) -> Result<Vec<DetectionSet<f64>>, OrchestratorError> {
    if job.adapter.role != AdapterRole::Detector {
        return Err(OrchestratorError::Config(format!(
            "adapter `{}` is not a detector",
            job.adapter_id
        )));
    }
    job.options.extract().validate()?;
    let work_dir = absolute(work_dir)?;
    let output_dir = work_dir.join("output");
    if output_dir.exists() {
        std::fs::remove_dir_all(&output_dir).map_err(|e| OrchestratorError::io(&output_dir, e))?;
    }
    create_dir(&output_dir)?;
    let invocation = Invocation {
        role: AdapterRole::Detector,
        frames: job
            .frames
            .iter()
            .map(|f| InvocationFrame {
                frame_id: f.frame_id.clone(),
                images: f.images.clone(),
            })
            .collect(),
        grid: job.grid.clone(),
        output_dir: output_dir.display().to_string(),
        options: InvocationOptions {
            min_prob: job.options.min_prob,
            nms_radius: job.options.nms_radius,
        },
        model: job
            .model
            .map(|m| absolute(m).map(|p| p.display().to_string()))
            .transpose()?,
        training: None,
        passthrough: serde_json::Value::Null,
    };
    let inv_path = work_dir.join("invocation.json");
    write_json(&inv_path, &invocation)?;
    run_adapter(
        job.adapter_id,
        job.adapter,
        &inv_path,
        &output_dir,
        &work_dir.join("adapter"),
    )?;
    collect_output(job, &output_dir)
}

pub(crate) fn absolute(path: &Path) -> Result<PathBuf, OrchestratorError> {
    std::path::absolute(path).map_err(|e| OrchestratorError::io(path, e))
}

fn malformed(job: &DetectorJob, msg: String) -> OrchestratorError {
    OrchestratorError::Adapter(AdapterFailure {
        adapter: job.adapter_id.to_string(),
        kind: FailureKind::MalformedOutput(msg),
        stderr: String::new(),
    })
}

fn collect_output(
    job: &DetectorJob,
    output_dir: &Path,
) -> Result<Vec<DetectionSet<f64>>, OrchestratorError> {
    let dets_path = output_dir.join(DETECTIONS_FILE);
    let mut found: HashMap<String, DetectionSet<f64>> = HashMap::new();
    if dets_path.is_file() {
        for set in read_detections(&dets_path).map_err(|e| malformed(job, e.to_string()))? {
            found.insert(set.frame_id().to_string(), set);
        }
    } else {
        let any_raster = std::fs::read_dir(output_dir)
            .map_err(|e| OrchestratorError::io(output_dir, e))?
            .filter_map(Result::ok)
            .any(|e| e.path().extension().is_some_and(|x| x == RASTER_EXTENSION));
        if !any_raster {
            return Err(malformed(
                job,
                format!(
                    "{} holds neither {DETECTIONS_FILE} nor .{RASTER_EXTENSION} rasters",
                    output_dir.display()
                ),
            ));
        }
        let opts = job.options.extract();
        for f in job.frames {
            let path = output_dir.join(format!("{}.{RASTER_EXTENSION}", f.frame_id));
            if !path.is_file() {
                continue;
            }
            let raster = read_raster_file(&path)
                .map_err(|e| malformed(job, format!("{}: {e}", path.display())))?;
            if raster.grid != *job.grid {
                return Err(malformed(
                    job,
                    format!(
                        "{}: raster grid differs from the dataset grid",
                        path.display()
                    ),
                ));
            }
            if raster.frame_id != f.frame_id {
                return Err(malformed(
                    job,
                    format!("{}: header frame id `{}`", path.display(), raster.frame_id),
                ));
            }
            let dets = extract_locations_with(&raster.heatmap_f64(), &opts)?;
            let set = DetectionSet::new(f.frame_id.clone(), dets)
                .map_err(|e| malformed(job, e.to_string()))?;
            found.insert(f.frame_id.clone(), set);
        }
    }
    let mut out = Vec::with_capacity(job.frames.len());
    let mut missing = Vec::new();
    for f in job.frames {
        match found.remove(&f.frame_id) {
            Some(set) => out.push(set),
            None => missing.push(f.frame_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(OrchestratorError::Coverage {
            adapter: job.adapter_id.to_string(),
            missing,
        });
    }
    if !found.is_empty() {
        log::warn!(
            "adapter `{}` returned {} unrequested frame(s); ignored",
            job.adapter_id,
            found.len()
        );
    }
    Ok(out)
}

/// Writes detections, heatmap labels and the label manifest into `dir`.
pub fn write_label_set(
    dir: &Path,
    kind: LabelKind,
    sets: &[DetectionSet<f64>],
    grid: &GroundGrid<f64>,
    options: &LabelingOptions,
    provenance: Option<Provenance>,
) -> Result<LabelSet, OrchestratorError> {
    let kernel = options.kernel.build::<f64>()?;
    let heat_dir = dir.join("heatmaps");
    create_dir(&heat_dir)?;
    let dets_path = dir.join(DETECTIONS_FILE);
    fsio::atomic_write(&dets_path, render_detections(sets).as_bytes())
        .map_err(|e| OrchestratorError::io(&dets_path, e))?;
    let mut entries = Vec::with_capacity(sets.len());
    for set in sets {
        let outside = set.points().filter(|p| !grid.contains(p)).count();
        if outside > 0 {
            log::warn!(
                "frame `{}`: {outside} label(s) outside the grid dropped from the heatmap",
                set.frame_id()
            );
        }
        let heat = label_pipeline(set, grid, &kernel, OutOfBoundsPolicy::Drop)?;
        let bytes = encode(set.frame_id(), &heat);
        let rel = format!("heatmaps/{}.{RASTER_EXTENSION}", set.frame_id());
        let path = dir.join(&rel);
        fsio::atomic_write(&path, &bytes).map_err(|e| OrchestratorError::io(&path, e))?;
        entries.push(LabelEntry {
            frame_id: set.frame_id().to_string(),
            detections_digest: fsio::sha256_hex(
                render_detections(std::slice::from_ref(set)).as_bytes(),
            ),
            heatmap: Some(rel),
            heatmap_digest: Some(fsio::sha256_hex(&bytes)),
        });
    }
    let labels = LabelSet {
        kind,
        detections: DETECTIONS_FILE.to_string(),
        entries,
        provenance,
    };
    write_json(&dir.join(LABEL_MANIFEST), &labels)?;
    if let Some(p) = &labels.provenance {
        write_json(&dir.join(PROVENANCE_FILE), p)?;
    }
    Ok(labels)
}

/// Runs the detector over `job.frames` and stores the result as a label set
/// of `kind` in `dir`; the adapter's scratch files go to `dir/run`.
pub fn generate_labels(
    job: &DetectorJob,
    kind: LabelKind,
    round: usize,
    dir: &Path,
) -> Result<LabelSet, OrchestratorError> {
    let input_digest = job.input_digest()?;
    let sets = run_detector(job, &dir.join("run"))?;
    let provenance = Provenance {
        adapter_id: job.adapter_id.to_string(),
        command_digest: job.adapter.digest(),
        input_digest,
        round,
    };
    write_label_set(dir, kind, &sets, job.grid, job.options, Some(provenance))
}
