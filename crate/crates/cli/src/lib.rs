//! `mvlabel` command-line front end.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use mvlabel_core::dataio::{render_detections, AnnotationFormat, LabelKind};

use crate::commands::SimulateRequest;
use crate::config::{FileConfig, GlobalArgs, Settings};
use crate::error::{CliError, CliResult, Exit};

#[derive(Debug, Parser)]
#[command(
    name = "mvlabel",
    version,
    about = "Ground-plane labels, extraction, evaluation and labeling campaigns"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render heatmap labels (MVHM rasters + manifest) from detections.
    GenLabels {
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label kind recorded in the manifest.
        #[arg(long, default_value = "LT")]
        kind: LabelKind,
        /// Skip detections outside the grid instead of failing.
        #[arg(long)]
        drop_out_of_bounds: bool,
    },
    /// Extract detections from MVHM rasters (files or directories).
    Extract {
        #[arg(required = true)]
        rasters: Vec<PathBuf>,
        /// Output JSON-lines file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against annotations.
    Evaluate {
        detections: PathBuf,
        annotations: PathBuf,
        /// canonical, wildtrack-json or multiviewx-json.
        #[arg(long)]
        annotation_format: Option<AnnotationFormat>,
        /// Report JSON file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-frame CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Project detections into a camera image.
    Project {
        detections: PathBuf,
        /// Calibration file, directory of `<camera>.json`, or dataset manifest.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        camera: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic annotations and noisy detections.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        /// Poisson mean of people per frame.
        #[arg(long)]
        mean_people: Option<f64>,
        /// Exact number of people per frame.
        #[arg(long)]
        people: Option<usize>,
        #[arg(long)]
        min_separation: Option<f64>,
        #[arg(long)]
        p_miss: Option<f64>,
        #[arg(long)]
        fp_per_frame: Option<f64>,
        #[arg(long)]
        loc_sigma: Option<f64>,
        /// Draw scores uniformly from [low, high] instead of 1.0.
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
        score_range: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a multi-round labeling campaign (--config is the campaign file).
    Orchestrate {
        /// Overrides the campaign's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse completed rounds from an earlier run.
        #[arg(long)]
        resume: bool,
    },
}

fn init_logging(level: Option<&str>) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(l) = level {
        b.parse_filters(l);
    }
    b.target(env_logger::Target::Stderr).format_timestamp(None);
    let _ = b.try_init();
}

fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => commands::write_output(p, bytes),
        None => match std::io::stdout().write_all(bytes) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(CliError::new(Exit::Internal, e))
            }
            _ => Ok(()),
        },
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if let Command::Orchestrate { out, resume } = &cli.command {
        init_logging(g.log_level.as_deref());
        let config = g
            .config
            .as_ref()
            .ok_or_else(|| CliError::usage("orchestrate needs --config <campaign.json>"))?;
        let outcome = commands::orchestrate(g, config, out.as_deref(), *resume)?;
        eprint!("{}", commands::summary_table(&outcome.rows));
        emit(None, &commands::to_json(&outcome.rows))?;
        return match outcome.failure {
            Some(f) => Err(commands::outcome_error(f)),
            None => Ok(()),
        };
    }
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    init_logging(g.log_level.as_deref().or(file.log_level.as_deref()));
    let s = Settings::resolve(g, &file)?;
    match cli.command {
        Command::GenLabels {
            detections,
            out,
            kind,
            drop_out_of_bounds,
        } => {
            commands::gen_labels(&s, &detections, &out, kind, drop_out_of_bounds)?;
        }
        Command::Extract { rasters, out } => {
            let sets = commands::extract(&s, &rasters)?;
            emit(out.as_ref(), render_detections(&sets).as_bytes())?;
        }
        Command::Evaluate {
            detections,
            annotations,
            annotation_format,
            out,
            csv,
        } => {
            let format = annotation_format
                .or(s.annotation_format)
                .unwrap_or(AnnotationFormat::Canonical);
            let report = commands::evaluate_files(&s, &detections, &annotations, format)?;
            if let Some(p) = csv {
                commands::write_output(&p, &commands::report_csv(&report)?)?;
            }
            emit(out.as_ref(), &commands::to_json(&report))?;
        }
        Command::Project {
            detections,
            calibration,
            camera,
            out,
        } => {
            let frames = commands::project(&detections, &calibration, camera.as_deref())?;
            emit(out.as_ref(), &commands::render_jsonl(&frames))?;
        }
        Command::Simulate {
            out,
            frames,
            mean_people,
            people,
            min_separation,
            p_miss,
            fp_per_frame,
            loc_sigma,
            score_range,
            seed,
        } => {
            let req = SimulateRequest {
                n_frames: frames,
                mean_people,
                people,
                min_separation,
                p_miss,
                fp_per_frame,
                loc_sigma,
                score_range: score_range.map(|v| (v[0], v[1])),
                seed,
            };
            commands::simulate(&s, &req, &out)?;
        }
        Command::Orchestrate { .. } => unreachable!("handled above"),
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                Exit::Usage as i32
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e.error));
            e.exit as i32
        }
    }
}

/// Error chain on one line; causes already quoted by their parent are skipped.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
