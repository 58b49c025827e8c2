//! Subcommand bodies. Each returns its machine output; `lib.rs` writes it.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use mvlabel_core::dataio::{
    parse_annotations, read_detections, render_detections, AnnotationFormat, AnnotationSource,
    DatasetManifest, FrameRecord, LabelKind, LabelSet,
};
use mvlabel_core::fsio::atomic_write;
use mvlabel_core::geometry::{CalibrationFile, CameraCalibration, GeometryError, GridSpec};
use mvlabel_core::heatmap::raster::read_raster_file;
use mvlabel_core::heatmap::{extract_locations_with, rasterize, DetectionSet, OutOfBoundsPolicy};
use mvlabel_core::metrics::{display_metric, evaluate, EvalReport};
use mvlabel_core::orchestrator::{
    run_campaign, write_label_set, CampaignConfig, CampaignOutcome, OrchestratorError, RunOptions,
    SummaryRow,
};
use mvlabel_core::simulator::{
    gen_scene, simulate_detector, HeadCount, NoiseModel, SceneParams, ScoreLaw,
};

use crate::config::{override_labeling, GlobalArgs, Settings};
use crate::error::{CliError, CliResult, Exit};

pub fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    atomic_write(path, bytes).map_err(|e| {
        CliError::new(Exit::Internal, e).context(format!("writing {}", path.display()))
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("output serializes");
    v.push(b'\n');
    v
}

/// Heatmap labels for every frame of a detections file.
pub fn gen_labels(
    s: &Settings,
    detections: &Path,
    out: &Path,
    kind: LabelKind,
    drop_out_of_bounds: bool,
) -> CliResult<LabelSet> {
    let sets = read_detections(detections)?;
    if !drop_out_of_bounds {
        for set in &sets {
            rasterize(set, &s.grid, OutOfBoundsPolicy::Reject)
                .map_err(|e| CliError::from(e).context(detections.display()))?;
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::new(Exit::Internal, e))?;
    let labels = write_label_set(out, kind, &sets, &s.grid, &s.labeling(), None)?;
    log::info!(
        "wrote {} label raster(s) to {}",
        labels.entries.len(),
        out.display()
    );
    Ok(labels)
}

fn expand_rasters(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::parse(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "mvhm"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

/// Threshold + NMS over raster files (directories expand to their
/// `*.mvhm` files in name order).
pub fn extract(s: &Settings, inputs: &[PathBuf]) -> CliResult<Vec<DetectionSet<f64>>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for path in expand_rasters(inputs)? {
        let frame =
            read_raster_file(&path).map_err(|e| CliError::from(e).context(path.display()))?;
        if !seen.insert(frame.frame_id.clone()) {
            return Err(CliError::parse(format!(
                "{}: duplicate frame `{}`",
                path.display(),
                frame.frame_id
            )));
        }
        let dets = extract_locations_with(&frame.heatmap_f64(), &s.extract)?;
        out.push(DetectionSet::new(frame.frame_id, dets)?);
    }
    Ok(out)
}

fn preview(ids: &[&str]) -> String {
    let mut s = ids.iter().take(10).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > 10 {
        s.push_str(", ...");
    }
    s
}

/// Matches detections to annotations frame by frame. Both files must cover
/// the same frame ids.
pub fn evaluate_files(
    s: &Settings,
    detections: &Path,
    annotations: &Path,
    format: AnnotationFormat,
) -> CliResult<EvalReport> {
    let dets = read_detections(detections)?;
    let gts = parse_annotations(annotations, format, &s.grid)?;
    let det_ids: HashSet<&str> = dets.iter().map(|d| d.frame_id()).collect();
    let gt_ids: HashSet<&str> = gts.iter().map(|g| g.frame_id.as_str()).collect();
    let missing: Vec<&str> = gts
        .iter()
        .map(|g| g.frame_id.as_str())
        .filter(|id| !det_ids.contains(id))
        .collect();
    let extra: Vec<&str> = dets
        .iter()
        .map(|d| d.frame_id())
        .filter(|id| !gt_ids.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("detections and annotations cover different frames");
        if !missing.is_empty() {
            msg.push_str(&format!(
                "; missing detections for {} frame(s): {}",
                missing.len(),
                preview(&missing)
            ));
        }
        if !extra.is_empty() {
            msg.push_str(&format!(
                "; no annotations for {} frame(s): {}",
                extra.len(),
                preview(&extra)
            ));
        }
        return Err(CliError::parse(msg));
    }
    let mut by_id: HashMap<String, DetectionSet<f64>> = dets
        .into_iter()
        .map(|d| (d.frame_id().to_string(), d))
        .collect();
    let pairs: Vec<_> = gts
        .into_iter()
        .map(|g| {
            (
                by_id.remove(&g.frame_id).expect("frame sets checked"),
                g.gts,
            )
        })
        .collect();
    if pairs.is_empty() {
        return Err(CliError::parse("no frames to evaluate"));
    }
    let report = evaluate(&pairs, s.match_radius)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "MODA {} MODP {} precision {} recall {}",
        display_metric(report.moda),
        display_metric(report.modp),
        display_metric(report.precision),
        display_metric(report.recall)
    );
    Ok(report)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::new(Exit::Internal, e)
}

/// One row per frame; undefined metrics are empty cells.
pub fn report_csv(report: &EvalReport) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "frame_id",
        "tp",
        "fp",
        "fn",
        "n_gt",
        "moda",
        "modp",
        "precision",
        "recall",
    ])
    .map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for f in &report.per_frame {
        w.write_record([
            f.frame_id.clone(),
            f.tp.to_string(),
            f.fp.to_string(),
            f.fn_.to_string(),
            f.n_gt.to_string(),
            cell(f.moda),
            cell(f.modp),
            cell(f.precision),
            cell(f.recall),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::new(Exit::Internal, anyhow::anyhow!("{e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub behind_camera: bool,
    pub in_image: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedFrame {
    pub frame_id: String,
    pub camera: String,
    pub points: Vec<ProjectedPoint>,
}

fn parse_calibration(value: serde_json::Value, origin: &str) -> CliResult<CameraCalibration<f64>> {
    let file: CalibrationFile =
        serde_json::from_value(value).map_err(|e| CliError::parse(format!("{origin}: {e}")))?;
    Ok(file
        .to_calibration::<f64>()
        .map_err(|e| CliError::from(e).context(origin))?)
}

/// Finds a camera in a directory of `<camera>.json` files, a single
/// calibration document, a `{camera: calibration}` map or a dataset
/// manifest.
pub fn load_camera(
    path: &Path,
    camera: Option<&str>,
) -> CliResult<(String, CameraCalibration<f64>)> {
    let need = || CliError::usage("--camera is required for multi-camera calibration sources");
    if path.is_dir() {
        let id = camera.ok_or_else(need)?;
        let file = path.join(format!("{id}.json"));
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::parse(format!("{}: {e}", file.display())))?;
        let value = serde_json::from_str(&text)
            .map_err(|e| CliError::parse(format!("{}: {e}", file.display())))?;
        return Ok((
            id.to_string(),
            parse_calibration(value, &file.display().to_string())?,
        ));
    }
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::parse(format!("{origin}: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{origin}:{}: {e}", e.line())))?;
    if value.get("intrinsics").is_some() {
        return Ok((
            camera.unwrap_or("camera").to_string(),
            parse_calibration(value, &origin)?,
        ));
    }
    if value.get("frames").is_some() && value.get("cameras").is_some() {
        let manifest: DatasetManifest =
            serde_json::from_value(value).map_err(|e| CliError::parse(format!("{origin}: {e}")))?;
        let entry = match camera {
            Some(id) => manifest.cameras.iter().find(|c| c.id == id),
            None if manifest.cameras.len() == 1 => manifest.cameras.first(),
            None => return Err(need()),
        }
        .ok_or_else(|| {
            CliError::usage(format!(
                "{origin}: no camera `{}`",
                camera.unwrap_or_default()
            ))
        })?;
        let calib = entry
            .calibration
            .to_calibration::<f64>()
            .map_err(|e| CliError::from(e).context(&origin))?;
        return Ok((entry.id.clone(), calib));
    }
    let serde_json::Value::Object(mut map) = value else {
        return Err(CliError::parse(format!(
            "{origin}: expected a calibration object"
        )));
    };
    let id = match camera {
        Some(id) => id.to_string(),
        None if map.len() == 1 => map.keys().next().cloned().expect("one key"),
        None => return Err(need()),
    };
    let value = map
        .remove(&id)
        .ok_or_else(|| CliError::usage(format!("{origin}: no camera `{id}`")))?;
    Ok((id, parse_calibration(value, &origin)?))
}

/// Image coordinates of every detection; points behind the camera are flagged.
pub fn project(
    detections: &Path,
    calibration: &Path,
    camera: Option<&str>,
) -> CliResult<Vec<ProjectedFrame>> {
    let (camera, calib) = load_camera(calibration, camera)?;
    let (w, h) = calib.image_size();
    let sets = read_detections(detections)?;
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        let points = set
            .points()
            .map(|p| match calib.project(&p) {
                Ok((u, v)) => Ok(ProjectedPoint {
                    x: p.x,
                    y: p.y,
                    u: Some(u),
                    v: Some(v),
                    behind_camera: false,
                    in_image: (0.0..f64::from(w)).contains(&u) && (0.0..f64::from(h)).contains(&v),
                }),
                Err(GeometryError::BehindCamera { .. }) => Ok(ProjectedPoint {
                    x: p.x,
                    y: p.y,
                    u: None,
                    v: None,
                    behind_camera: true,
                    in_image: false,
                }),
                Err(e) => Err(CliError::from(e)),
            })
            .collect::<CliResult<Vec<_>>>()?;
        out.push(ProjectedFrame {
            frame_id: set.frame_id().to_string(),
            camera: camera.clone(),
            points,
        });
    }
    Ok(out)
}

pub fn render_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Flag values for `simulate`; unset fields fall back to the scenario
/// config, then to defaults.
#[derive(Debug, Clone, Default)]
pub struct SimulateRequest {
    pub n_frames: Option<usize>,
    pub mean_people: Option<f64>,
    pub people: Option<usize>,
    pub min_separation: Option<f64>,
    pub p_miss: Option<f64>,
    pub fp_per_frame: Option<f64>,
    pub loc_sigma: Option<f64>,
    pub score_range: Option<(f64, f64)>,
    pub seed: Option<u64>,
}

pub const DEFAULT_SIM_FRAMES: usize = 400;
pub const DEFAULT_MEAN_PEOPLE: f64 = 23.8;

#[derive(Serialize)]
struct SimParamsEcho<'a> {
    scene: &'a SceneParams,
    noise: &'a NoiseModel,
    detector_seed: u64,
}

/// Writes `annotations.jsonl`, `detections.jsonl`, `params.json` and a
/// dataset `manifest.json` into `out`.
pub fn simulate(s: &Settings, req: &SimulateRequest, out: &Path) -> CliResult<()> {
    let sc = &s.simulate;
    let n_frames = req.n_frames.or(sc.n_frames).unwrap_or(DEFAULT_SIM_FRAMES);
    let people = match (req.people, req.mean_people) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "--people and --mean-people are mutually exclusive",
            ))
        }
        (Some(count), None) => HeadCount::Exact { count },
        (None, Some(mean)) => HeadCount::Poisson { mean },
        (None, None) => sc.people.unwrap_or(HeadCount::Poisson {
            mean: DEFAULT_MEAN_PEOPLE,
        }),
    };
    let seed = req.seed.or(sc.seed).unwrap_or(0);
    let scene = SceneParams {
        grid: s.grid.clone(),
        n_frames,
        people,
        min_separation: req.min_separation.or(sc.min_separation).unwrap_or(0.0),
        seed,
    };
    let mut noise = sc.noise.unwrap_or_default();
    if let Some(v) = req.p_miss {
        noise.p_miss = v;
    }
    if let Some(v) = req.fp_per_frame {
        noise.fp_per_frame = v;
    }
    if let Some(v) = req.loc_sigma {
        noise.loc_sigma = v;
    }
    if let Some((low, high)) = req.score_range {
        noise.score = ScoreLaw::Uniform { low, high };
    }
    let detector_seed = seed.wrapping_add(1);
    let frames = gen_scene(&scene)?;
    let dets = simulate_detector(&frames, &s.grid, &noise, detector_seed)?;
    let gts: Vec<DetectionSet<f64>> = frames.iter().map(|f| f.gts.clone()).collect();
    write_output(
        &out.join("annotations.jsonl"),
        render_detections(&gts).as_bytes(),
    )?;
    write_output(
        &out.join("detections.jsonl"),
        render_detections(&dets).as_bytes(),
    )?;
    write_output(
        &out.join("params.json"),
        &to_json(&SimParamsEcho {
            scene: &scene,
            noise: &noise,
            detector_seed,
        }),
    )?;
    let manifest = DatasetManifest {
        name: "simulated".into(),
        grid: GridSpec::Explicit(s.grid.clone()),
        cameras: vec![],
        frames: frames
            .iter()
            .map(|f| FrameRecord {
                frame_id: f.frame_id.clone(),
                images: vec![],
            })
            .collect(),
        annotations: Some(AnnotationSource {
            path: "annotations.jsonl".into(),
            format: AnnotationFormat::Canonical,
        }),
        split: Default::default(),
    };
    manifest.save(&out.join("manifest.json"))?;
    log::info!("simulated {n_frames} frame(s) into {}", out.display());
    Ok(())
}

/// Runs a campaign; the outcome carries any mid-campaign failure.
pub fn orchestrate(
    args: &GlobalArgs,
    config: &Path,
    out: Option<&Path>,
    resume: bool,
) -> CliResult<CampaignOutcome> {
    if args.grid.is_some() {
        return Err(CliError::usage(
            "--grid does not apply to orchestrate; the dataset manifests define the grid",
        ));
    }
    let data_root = mvlabel_core::dataio::data_root_from_env();
    let mut cfg = CampaignConfig::load(config, data_root.as_deref())?;
    override_labeling(args, &mut cfg.labeling);
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    let outcome = run_campaign(cfg.clone(), &RunOptions { resume, data_root })?;
    let root =
        std::path::absolute(&cfg.output_dir).map_err(|e| CliError::new(Exit::Internal, e))?;
    write_output(&root.join("summary.csv"), &summary_csv(&outcome.rows)?)?;
    Ok(outcome)
}

pub fn summary_csv(rows: &[SummaryRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "training_data",
        "moda",
        "modp",
        "precision",
        "recall",
    ])
    .map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.training_data.clone(),
            cell(r.moda),
            cell(r.modp),
            cell(r.precision),
            cell(r.recall),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::new(Exit::Internal, anyhow::anyhow!("{e}")))
}

/// Fixed-width table for the terminal, metrics as percentages.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", 100.0 * x));
    let width = rows
        .iter()
        .map(|r| r.training_data.len())
        .max()
        .unwrap_or(0)
        .max("Training data".len());
    let mut s = format!(
        "{:>6}  {:<width$}  {:>6}  {:>6}  {:>9}  {:>6}\n",
        "Rounds", "Training data", "MODA", "MODP", "Precision", "Recall"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>6}  {:<width$}  {:>6}  {:>6}  {:>9}  {:>6}\n",
            r.round,
            r.training_data,
            pct(r.moda),
            pct(r.modp),
            pct(r.precision),
            pct(r.recall)
        ));
    }
    s
}

pub fn outcome_error(failure: OrchestratorError) -> CliError {
    CliError::from(failure).context("campaign halted")
}
