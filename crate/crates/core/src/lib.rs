//! Non-neural core of unlabeled multi-view pedestrian detection.
//!
//! * [`geometry`]: ground grid discretization and pinhole projection.
//! * [`heatmap`]: occupancy maps, Gaussian heatmap labels, peak extraction
//!   and the MVHM raster format.
//! * [`metrics`]: Hungarian matching and MODA / MODP / precision / recall.
//! * [`dataio`]: detection and annotation files, dataset manifests, splits.
//! * [`simulator`]: seeded synthetic scenes and noisy detectors.
//! * [`orchestrator`]: multi-round automatic labeling driving external
//!   detector and trainer processes.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod dataio;
pub mod fsio;
pub mod geometry;
pub mod heatmap;
pub mod metrics;
pub mod orchestrator;
pub mod rng;
pub mod scalar;
pub mod simulator;

pub use scalar::Real;

pub type WorldPoint = geometry::WorldPoint<f64>;
pub type GroundGrid = geometry::GroundGrid<f64>;
pub type CameraCalibration = geometry::CameraCalibration<f64>;
pub type Detection = heatmap::Detection<f64>;
pub type DetectionSet = heatmap::DetectionSet<f64>;
pub type Heatmap = heatmap::Heatmap<f64>;
pub type GaussianKernel = heatmap::GaussianKernel<f64>;

pub type WorldPoint32 = geometry::WorldPoint<f32>;
pub type GroundGrid32 = geometry::GroundGrid<f32>;
pub type CameraCalibration32 = geometry::CameraCalibration<f32>;
pub type Detection32 = heatmap::Detection<f32>;
pub type DetectionSet32 = heatmap::DetectionSet<f32>;
pub type Heatmap32 = heatmap::Heatmap<f32>;
pub type GaussianKernel32 = heatmap::GaussianKernel<f32>;

pub use geometry::{CellIndex, GridPreset, GridSpec};
pub use heatmap::{
    ExtractOptions, KernelNormalization, KernelSpec, NmsCandidates, OutOfBoundsPolicy,
};
pub use metrics::{EvalReport, FrameMatching};
