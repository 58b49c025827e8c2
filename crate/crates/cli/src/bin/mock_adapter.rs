//! Stand-in adapter for tests and dry runs.
//!
//! `detector`: answers each requested frame from the model file when the
//! invocation names one and it memorized that frame, else from `--echo`,
//! else with no detections. `--heatmaps` writes MVHM label rasters instead
//! of a detections file.
//!
//! `trainer`: memorizes the target-origin training labels, on top of the
//! init model when fine-tuning, and writes them as the model file.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mvlabel_core::dataio::{read_detections, render_detections};
use mvlabel_core::fsio::atomic_write;
use mvlabel_core::heatmap::raster::encode;
use mvlabel_core::heatmap::{label_pipeline, DetectionSet, KernelSpec, OutOfBoundsPolicy};
use mvlabel_core::orchestrator::protocol::{
    Invocation, Origin, TrainingManifest, TrainingModeKind, DETECTIONS_FILE, INVOCATION_ENV,
};

#[derive(Parser)]
struct Cli {
    #[command(subcommand)]
    role: Role,
}

#[derive(Subcommand)]
enum Role {
    Detector {
        #[command(flatten)]
        common: Common,
        /// Detections to replay for frames the model does not know.
        #[arg(long)]
        echo: Option<PathBuf>,
        #[arg(long)]
        heatmaps: bool,
        #[arg(long, default_value_t = 41)]
        kernel_size: usize,
        #[arg(long, default_value_t = 5.0)]
        sigma: f64,
    },
    Trainer {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Invocation file; defaults to $MVLABEL_INVOCATION.
    #[arg(long)]
    invocation: Option<PathBuf>,
    /// Append one line per launch to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Exit with this status after logging the launch.
    #[arg(long)]
    fail_exit: Option<i32>,
    #[arg(long)]
    sleep: Option<f64>,
    /// Sleep for `--sleep` seconds only if this marker file is absent;
    /// creates it holding the process id.
    #[arg(long)]
    sleep_once: Option<PathBuf>,
}

impl Common {
    fn start(&self, role: &str) -> Result<Invocation> {
        let path = match &self.invocation {
            Some(p) => p.clone(),
            None => PathBuf::from(std::env::var_os(INVOCATION_ENV).context("no invocation given")?),
        };
        let inv = Invocation::load(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(log) = &self.log {
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(log)?;
            writeln!(
                f,
                "{role} frames={} model={}",
                inv.frames.len(),
                inv.model.is_some()
            )?;
        }
        if let Some(code) = self.fail_exit {
            eprintln!("mock {role}: failing on request");
            std::process::exit(code);
        }
        if let Some(secs) = self.sleep {
            let sleep = match &self.sleep_once {
                Some(marker) if marker.exists() => false,
                Some(marker) => {
                    std::fs::write(marker, std::process::id().to_string())?;
                    true
                }
                None => true,
            };
            if sleep {
                std::thread::sleep(Duration::from_secs_f64(secs));
            }
        }
        Ok(inv)
    }
}

fn by_frame(path: &Path) -> Result<HashMap<String, DetectionSet<f64>>> {
    Ok(read_detections(path)?
        .into_iter()
        .map(|s| (s.frame_id().to_string(), s))
        .collect())
}

fn detector(
    inv: &Invocation,
    echo: Option<&Path>,
    heatmaps: bool,
    kernel: KernelSpec,
) -> Result<()> {
    let echo = echo.map(by_frame).transpose()?.unwrap_or_default();
    let model = inv
        .model
        .as_deref()
        .map(|m| by_frame(Path::new(m)))
        .transpose()?
        .unwrap_or_default();
    let out = Path::new(&inv.output_dir);
    let sets: Vec<DetectionSet<f64>> = inv
        .frames
        .iter()
        .map(|f| {
            model
                .get(&f.frame_id)
                .or_else(|| echo.get(&f.frame_id))
                .cloned()
                .map_or_else(|| DetectionSet::empty(f.frame_id.clone()), Ok)
        })
        .collect::<Result<_, _>>()?;
    if heatmaps {
        let k = kernel.build::<f64>()?;
        for set in &sets {
            let h = label_pipeline(set, &inv.grid, &k, OutOfBoundsPolicy::Drop)?;
            atomic_write(
                &out.join(format!("{}.mvhm", set.frame_id())),
                &encode(set.frame_id(), &h),
            )?;
        }
    } else {
        atomic_write(
            &out.join(DETECTIONS_FILE),
            render_detections(&sets).as_bytes(),
        )?;
    }
    Ok(())
}

fn trainer(inv: &Invocation) -> Result<()> {
    let Some(req) = &inv.training else {
        bail!("trainer invocation without a training block");
    };
    let manifest = TrainingManifest::load(Path::new(&req.manifest))?;
    let mut memory: BTreeMap<String, DetectionSet<f64>> = BTreeMap::new();
    if req.mode == TrainingModeKind::FT {
        let init = req.init_model.as_deref().context("FT without init_model")?;
        memory.extend(by_frame(Path::new(init))?);
    }
    let root = Path::new(&req.root);
    let mut files: HashMap<&str, HashMap<String, DetectionSet<f64>>> = HashMap::new();
    for e in manifest
        .entries
        .iter()
        .filter(|e| e.origin == Origin::Target)
    {
        if !files.contains_key(e.detections.as_str()) {
            files.insert(&e.detections, by_frame(&root.join(&e.detections))?);
        }
        let set = files[e.detections.as_str()]
            .get(&e.frame_id)
            .with_context(|| format!("{}: no frame `{}`", e.detections, e.frame_id))?;
        memory.insert(e.frame_id.clone(), set.clone());
    }
    let sets: Vec<DetectionSet<f64>> = memory.into_values().collect();
    atomic_write(
        Path::new(&req.model_out),
        render_detections(&sets).as_bytes(),
    )?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.role {
        Role::Detector {
            common,
            echo,
            heatmaps,
            kernel_size,
            sigma,
        } => common.start("detector").and_then(|inv| {
            let kernel = KernelSpec {
                size: kernel_size,
                sigma,
                ..Default::default()
            };
            detector(&inv, echo.as_deref(), heatmaps, kernel)
        }),
        Role::Trainer { common } => common.start("trainer").and_then(|inv| trainer(&inv)),
    };
    if let Err(e) = result {
        eprintln!("mock adapter: {e:#}");
        std::process::exit(1);
    }
}
