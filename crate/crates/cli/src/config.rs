//! Settings resolution: built-in defaults < `--config` file < flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use mvlabel_core::dataio::{data_root_from_env, AnnotationFormat};
use mvlabel_core::geometry::{GridPreset, GridSpec, GroundGrid};
use mvlabel_core::heatmap::{ExtractOptions, KernelNormalization, KernelSpec, NmsCandidates};
use mvlabel_core::metrics::DEFAULT_MATCH_RADIUS;
use mvlabel_core::orchestrator::LabelingOptions;
use mvlabel_core::simulator::{HeadCount, NoiseModel};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON config file (campaign config for `orchestrate`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Grid preset (wildtrack, multiviewx) or a JSON grid file.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Kernel side length in cells (odd).
    #[arg(long, global = true)]
    pub kernel_size: Option<usize>,
    /// Kernel standard deviation in cells.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Kernel scaling: peak-one or literal-pdf.
    #[arg(long, global = true, value_parser = parse_normalization)]
    pub normalization: Option<KernelNormalization>,
    /// Peak extraction threshold.
    #[arg(long, global = true)]
    pub min_prob: Option<f64>,
    /// NMS suppression radius, meters.
    #[arg(long, global = true)]
    pub nms_radius: Option<f64>,
    /// NMS candidate cells: local-maxima or all-above-threshold.
    #[arg(long, global = true, value_parser = parse_candidates)]
    pub candidates: Option<NmsCandidates>,
    /// Match radius for evaluation, meters.
    #[arg(long, global = true)]
    pub match_radius: Option<f64>,
    /// error, warn, info, debug or trace; RUST_LOG also works.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
}

fn parse_normalization(s: &str) -> Result<KernelNormalization, String> {
    match s {
        "peak-one" | "peak_one" => Ok(KernelNormalization::PeakOne),
        "literal-pdf" | "literal_pdf" => Ok(KernelNormalization::LiteralPdf),
        _ => Err(format!("expected peak-one or literal-pdf, got `{s}`")),
    }
}

fn parse_candidates(s: &str) -> Result<NmsCandidates, String> {
    match s {
        "local-maxima" | "local_maxima" => Ok(NmsCandidates::LocalMaxima),
        "all-above-threshold" | "all_above_threshold" => Ok(NmsCandidates::AllAboveThreshold),
        _ => Err(format!(
            "expected local-maxima or all-above-threshold, got `{s}`"
        )),
    }
}

/// Scenario block for `simulate`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_frames: Option<usize>,
    pub people: Option<HeadCount>,
    pub min_separation: Option<f64>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseModel>,
}

/// Contents of a `--config` file for every subcommand but `orchestrate`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub grid: Option<GridSpec>,
    pub kernel: Option<KernelSpec>,
    pub min_prob: Option<f64>,
    pub nms_radius: Option<f64>,
    pub candidates: Option<NmsCandidates>,
    pub match_radius: Option<f64>,
    pub annotation_format: Option<AnnotationFormat>,
    pub data_root: Option<PathBuf>,
    pub log_level: Option<String>,
    pub simulate: Option<ScenarioConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::parse(format!("{}:{}: {e}", path.display(), e.line())))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub grid: GroundGrid<f64>,
    pub kernel: KernelSpec,
    pub extract: ExtractOptions<f64>,
    pub match_radius: f64,
    pub annotation_format: Option<AnnotationFormat>,
    pub data_root: Option<PathBuf>,
    pub simulate: ScenarioConfig,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs, file: &FileConfig) -> CliResult<Self> {
        let grid = match &args.grid {
            Some(g) => parse_grid(g)?,
            None => file.grid.clone().unwrap_or_default().resolve(),
        };
        let mut kernel = file.kernel.clone().unwrap_or_default();
        if let Some(s) = args.kernel_size {
            kernel.size = s;
        }
        if let Some(s) = args.sigma {
            kernel.sigma = s;
        }
        if let Some(n) = args.normalization {
            kernel.normalization = n;
        }
        kernel.build::<f64>()?;
        let defaults = ExtractOptions::<f64>::default();
        let extract = ExtractOptions::new(
            args.min_prob.or(file.min_prob).unwrap_or(defaults.min_prob),
            args.nms_radius
                .or(file.nms_radius)
                .unwrap_or(defaults.nms_radius),
        )
        .with_candidates(args.candidates.or(file.candidates).unwrap_or_default());
        extract.validate()?;
        let match_radius = args
            .match_radius
            .or(file.match_radius)
            .unwrap_or(DEFAULT_MATCH_RADIUS);
        if !(match_radius > 0.0 && match_radius.is_finite()) {
            return Err(CliError::usage(format!(
                "--match-radius must be positive, got {match_radius}"
            )));
        }
        Ok(Self {
            grid,
            kernel,
            extract,
            match_radius,
            annotation_format: file.annotation_format,
            data_root: data_root_from_env().or_else(|| file.data_root.clone()),
            simulate: file.simulate.clone().unwrap_or_default(),
        })
    }

    pub fn labeling(&self) -> LabelingOptions {
        LabelingOptions {
            min_prob: self.extract.min_prob,
            nms_radius: self.extract.nms_radius,
            candidates: self.extract.candidates,
            kernel: self.kernel.clone(),
            match_radius: self.match_radius,
        }
    }
}

/// A preset name or a JSON file holding a grid spec.
pub fn parse_grid(s: &str) -> CliResult<GroundGrid<f64>> {
    if let Ok(p) = s.parse::<GridPreset>() {
        return Ok(p.grid());
    }
    let path = Path::new(s);
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "--grid `{s}` is neither a preset (wildtrack, multiviewx) nor a grid file"
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::parse(format!("{s}: {e}")))?;
    let spec: GridSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{s}:{}: {e}", e.line())))?;
    Ok(spec.resolve())
}

/// Applies flag overrides to a campaign's labeling options.
pub fn override_labeling(args: &GlobalArgs, opts: &mut LabelingOptions) {
    if let Some(v) = args.min_prob {
        opts.min_prob = v;
    }
    if let Some(v) = args.nms_radius {
        opts.nms_radius = v;
    }
    if let Some(v) = args.candidates {
        opts.candidates = v;
    }
    if let Some(v) = args.match_radius {
        opts.match_radius = v;
    }
    if let Some(v) = args.kernel_size {
        opts.kernel.size = v;
    }
    if let Some(v) = args.sigma {
        opts.kernel.sigma = v;
    }
    if let Some(v) = args.normalization {
        opts.kernel.normalization = v;
    }
}
