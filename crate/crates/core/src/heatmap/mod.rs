//! Occupancy rasterization, Gaussian label synthesis and peak extraction.
//!
//! Labels are produced as `H = O ⊗ G(σ)` where `O` is the binary occupancy
//! map of a frame's detections and `G` a truncated Gaussian kernel. Peaks are
//! recovered by thresholding followed by greedy world-space NMS.

mod kernel;
pub mod raster;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CellIndex, GroundGrid, WorldPoint};
use crate::scalar::Real;

pub use kernel::{gaussian_kernel, GaussianKernel, KernelNormalization, KernelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("invalid kernel: {0}")]
    InvalidKernelSpec(String),
    #[error("frame `{frame_id}`: {} detection(s) outside the grid (indices {indices:?})", indices.len())]
    OutOfBounds {
        frame_id: String,
        indices: Vec<usize>,
    },
    #[error("heatmap has {actual} values, grid needs {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("heatmap value at flat index {index} is negative or non-finite")]
    InvalidValue { index: usize },
    #[error("invalid extraction parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("frame id must be non-empty")]
    EmptyFrameId,
    #[error("frame `{frame_id}`: detection {index} has non-finite coordinates")]
    NonFinite { frame_id: String, index: usize },
    #[error("frame `{frame_id}`: detection {index} has score {score} outside [0, 1]")]
    ScoreOutOfRange {
        frame_id: String,
        index: usize,
        score: f64,
    },
    #[error("frame `{frame_id}`: detections {first} and {second} share coordinates ({x}, {y})")]
    DuplicateCoordinates {
        frame_id: String,
        first: usize,
        second: usize,
        x: f64,
        y: f64,
    },
}

/// A ground-plane pedestrian location with a confidence score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T = f64> {
    pub location: WorldPoint<T>,
    pub score: T,
}

impl<T: Real> Detection<T> {
    pub fn new(x: T, y: T, score: T) -> Self {
        Self {
            location: WorldPoint::new(x, y),
            score,
        }
    }

    pub fn cast<U: Real>(self) -> Detection<U> {
        Detection {
            location: self.location.cast(),
            score: U::lit(self.score.as_f64()),
        }
    }
}

/// Detections of one frame. Validated on construction: non-empty frame id,
/// finite coordinates, scores in `[0, 1]` and no two identical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet<T = f64> {
    frame_id: String,
    detections: Vec<Detection<T>>,
}

impl<T: Real> DetectionSet<T> {
    pub fn new(
        frame_id: impl Into<String>,
        detections: Vec<Detection<T>>,
    ) -> Result<Self, DetectionError> {
        let frame_id = frame_id.into();
        if frame_id.is_empty() {
            return Err(DetectionError::EmptyFrameId);
        }
        let mut seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(detections.len());
        for (index, d) in detections.iter().enumerate() {
            if !d.location.is_finite() {
                return Err(DetectionError::NonFinite { frame_id, index });
            }
            if !(d.score >= T::zero() && d.score <= T::one()) {
                return Err(DetectionError::ScoreOutOfRange {
                    frame_id,
                    index,
                    score: d.score.as_f64(),
                });
            }
            // +0.0 and -0.0 are the same coordinate.
            let key = |v: T| (v.as_f64() + 0.0).to_bits();
            if let Some(first) = seen.insert((key(d.location.x), key(d.location.y)), index) {
                return Err(DetectionError::DuplicateCoordinates {
                    frame_id,
                    first,
                    second: index,
                    x: d.location.x.as_f64(),
                    y: d.location.y.as_f64(),
                });
            }
        }
        Ok(Self {
            frame_id,
            detections,
        })
    }

    pub fn empty(frame_id: impl Into<String>) -> Result<Self, DetectionError> {
        Self::new(frame_id, Vec::new())
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn detections(&self) -> &[Detection<T>] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = WorldPoint<T>> + '_ {
        self.detections.iter().map(|d| d.location)
    }

    pub fn into_detections(self) -> Vec<Detection<T>> {
        self.detections
    }

    pub fn cast<U: Real>(&self) -> DetectionSet<U> {
        DetectionSet {
            frame_id: self.frame_id.clone(),
            detections: self.detections.iter().map(|d| d.cast()).collect(),
        }
    }
}

/// Dense row-major scalar field over a [`GroundGrid`]; values finite, `≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T = f64> {
    grid: GroundGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Heatmap<T> {
    pub fn zeros(grid: GroundGrid<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    pub fn from_values(grid: GroundGrid<T>, values: Vec<T>) -> Result<Self, HeatmapError> {
        if values.len() != grid.len() {
            return Err(HeatmapError::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(index) = values
            .iter()
            .position(|v| !(v.is_finite() && *v >= T::zero()))
        {
            return Err(HeatmapError::InvalidValue { index });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GroundGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, cell: CellIndex) -> Option<T> {
        self.grid
            .contains_cell(cell)
            .then(|| self.values[self.grid.flat_index(cell)])
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != T::zero()).count()
    }

    pub fn is_binary(&self) -> bool {
        self.values
            .iter()
            .all(|v| *v == T::zero() || *v == T::one())
    }

    pub fn cast<U: Real>(&self) -> Heatmap<U> {
        Heatmap {
            grid: self.grid.cast(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn set(&mut self, cell: CellIndex, value: T) {
        let i = self.grid.flat_index(cell);
        self.values[i] = value;
    }
}

/// What to do with detections that fall outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfBoundsPolicy {
    #[default]
    Reject,
    Drop,
}

/// Binary occupancy map: 1 in every cell that contains a detection.
pub fn rasterize<T: Real>(
    dets: &DetectionSet<T>,
    grid: &GroundGrid<T>,
    policy: OutOfBoundsPolicy,
) -> Result<Heatmap<T>, HeatmapError> {
    let mut map = Heatmap::zeros(*grid);
    let mut outside = Vec::new();
    for (i, d) in dets.detections().iter().enumerate() {
        match grid.world_to_cell(&d.location) {
            Ok(cell) => map.set(cell, T::one()),
            Err(_) => outside.push(i),
        }
    }
    if !outside.is_empty() && policy == OutOfBoundsPolicy::Reject {
        return Err(HeatmapError::OutOfBounds {
            frame_id: dets.frame_id().to_string(),
            indices: outside,
        });
    }
    Ok(map)
}

/// Same-size 2D convolution with zero padding.
///
/// Computed by scattering the kernel around every nonzero input cell, which
/// is cheap for sparse occupancy maps and equal to the dense definition.
pub fn convolve_same<T: Real>(input: &Heatmap<T>, kernel: &GaussianKernel<T>) -> Heatmap<T> {
    let grid = *input.grid();
    let (rows, cols) = (grid.n_rows() as isize, grid.n_cols() as isize);
    let size = kernel.size() as isize;
    let half = size / 2;
    let kv = kernel.values();
    let mut out = vec![T::zero(); grid.len()];
    for (idx, &v) in input.values().iter().enumerate() {
        if v == T::zero() {
            continue;
        }
        let r0 = (idx as isize) / cols;
        let c0 = (idx as isize) % cols;
        let i_lo = (half - r0).max(0);
        let i_hi = (rows - 1 - r0 + half).min(size - 1);
        let j_lo = (half - c0).max(0);
        let j_hi = (cols - 1 - c0 + half).min(size - 1);
        for i in i_lo..=i_hi {
            let r = r0 + i - half;
            let out_row = (r * cols) as usize;
            let k_row = (i * size) as usize;
            for j in j_lo..=j_hi {
                let c = c0 + j - half;
                let cell = &mut out[out_row + c as usize];
                *cell = *cell + v * kv[k_row + j as usize];
            }
        }
    }
    Heatmap { grid, values: out }
}

/// Heatmap labels from a binary occupancy map.
pub fn make_labels<T: Real>(occupancy: &Heatmap<T>, kernel: &GaussianKernel<T>) -> Heatmap<T> {
    debug_assert!(
        occupancy.is_binary(),
        "make_labels expects a binary occupancy map"
    );
    convolve_same(occupancy, kernel)
}

/// Rasterize then convolve.
pub fn label_pipeline<T: Real>(
    dets: &DetectionSet<T>,
    grid: &GroundGrid<T>,
    kernel: &GaussianKernel<T>,
    policy: OutOfBoundsPolicy,
) -> Result<Heatmap<T>, HeatmapError> {
    let occupancy = rasterize(dets, grid, policy)?;
    Ok(make_labels(&occupancy, kernel))
}

/// Which cells enter greedy NMS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmsCandidates {
    /// Above-threshold cells that are `≥` each of their 8 neighbors.
    #[default]
    LocalMaxima,
    /// Every above-threshold cell.
    AllAboveThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions<T = f64> {
    pub min_prob: T,
    pub nms_radius: T,
    pub candidates: NmsCandidates,
}

impl<T: Real> ExtractOptions<T> {
    pub const DEFAULT_MIN_PROB: f64 = 0.4;
    pub const DEFAULT_NMS_RADIUS: f64 = 0.5;

    pub fn new(min_prob: T, nms_radius: T) -> Self {
        Self {
            min_prob,
            nms_radius,
            candidates: NmsCandidates::default(),
        }
    }

    pub fn with_candidates(mut self, candidates: NmsCandidates) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn validate(&self) -> Result<(), HeatmapError> {
        if !(self.min_prob > T::zero() && self.min_prob <= T::one()) {
            return Err(HeatmapError::InvalidParameters(format!(
                "min_prob must lie in (0, 1], got {}",
                self.min_prob
            )));
        }
        if !(self.nms_radius > T::zero()) || !self.nms_radius.is_finite() {
            return Err(HeatmapError::InvalidParameters(format!(
                "nms_radius must be positive, got {}",
                self.nms_radius
            )));
        }
        Ok(())
    }
}

impl<T: Real> Default for ExtractOptions<T> {
    fn default() -> Self {
        Self::new(
            T::lit(Self::DEFAULT_MIN_PROB),
            T::lit(Self::DEFAULT_NMS_RADIUS),
        )
    }
}

/// Threshold + greedy NMS with the default candidate rule.
pub fn extract_locations<T: Real>(
    h: &Heatmap<T>,
    min_prob: T,
    nms_radius: T,
) -> Result<Vec<Detection<T>>, HeatmapError> {
    extract_locations_with(h, &ExtractOptions::new(min_prob, nms_radius))
}

/// Greedy NMS over candidate cells in descending score order (row-major on
/// ties). A candidate is kept iff it is farther than `nms_radius` from every
/// kept one. Locations are cell centers, scores the heatmap values capped
/// at 1 (overlapping peaks can sum past it).
pub fn extract_locations_with<T: Real>(
    h: &Heatmap<T>,
    opts: &ExtractOptions<T>,
) -> Result<Vec<Detection<T>>, HeatmapError> {
    opts.validate()?;
    let grid = h.grid();
    let mut candidates: Vec<usize> = (0..grid.len())
        .filter(|&i| h.values[i] >= opts.min_prob)
        .filter(|&i| match opts.candidates {
            NmsCandidates::AllAboveThreshold => true,
            NmsCandidates::LocalMaxima => is_local_max(h, i),
        })
        .collect();
    candidates.sort_by(|&a, &b| {
        h.values[b]
            .partial_cmp(&h.values[a])
            .expect("heatmap values are finite")
            .then(a.cmp(&b))
    });

    let origin = grid.origin();
    let radius = opts.nms_radius;
    let bucket_of = |p: &WorldPoint<T>| -> (i64, i64) {
        (
            ((p.x - origin.x) / radius).floor().as_f64() as i64,
            ((p.y - origin.y) / radius).floor().as_f64() as i64,
        )
    };
    let mut buckets: HashMap<(i64, i64), Vec<WorldPoint<T>>> = HashMap::new();
    let mut kept = Vec::new();
    for idx in candidates {
        let p = grid.cell_center(grid.cell_of_flat(idx));
        let (bx, by) = bucket_of(&p);
        let suppressed = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                buckets
                    .get(&(bx + dx, by + dy))
                    .is_some_and(|pts| pts.iter().any(|q| p.distance(q) <= radius))
            })
        });
        if !suppressed {
            buckets.entry((bx, by)).or_default().push(p);
            kept.push(Detection {
                location: p,
                score: h.values[idx].min(T::one()),
            });
        }
    }
    Ok(kept)
}

fn is_local_max<T: Real>(h: &Heatmap<T>, idx: usize) -> bool {
    let grid = h.grid();
    let (rows, cols) = (grid.n_rows() as isize, grid.n_cols() as isize);
    let (r, c) = ((idx as isize) / cols, (idx as isize) % cols);
    let v = h.values[idx];
    for dr in -1..=1 {
        for dc in -1..=1 {
            let (rr, cc) = (r + dr, c + dc);
            if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= rows || cc >= cols {
                continue;
            }
            if h.values[(rr * cols + cc) as usize] > v {
                return false;
            }
        }
    }
    true
}
