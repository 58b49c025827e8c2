//! Detection evaluation: Hungarian matching within a radius and the
//! MODA / MODP / precision / recall metrics.
//!
//! Counts are aggregated over all frames before the ratios are taken.
//! MODP is the mean of `1 − d/radius` over matched pairs. Undefined ratios
//! (zero denominators) are `None` and serialize as JSON `null`.

pub mod assignment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldPoint;
use crate::heatmap::DetectionSet;
use crate::scalar::Real;

pub const DEFAULT_MATCH_RADIUS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("match radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("nothing to evaluate: no frames given")]
    NoFrames,
    #[error(
        "detections for frame `{detections}` paired with ground truth for frame `{ground_truth}`"
    )]
    FrameMismatch {
        detections: String,
        ground_truth: String,
    },
}

/// One matched detection / ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMatching {
    /// Sorted by detection index.
    pub pairs: Vec<MatchPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl FrameMatching {
    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).sum()
    }
}

fn check_radius(radius: f64) -> Result<(), MetricsError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::InvalidRadius(radius))
    }
}

/// Maximum-cardinality matching among pairs at distance `≤ radius`; among
/// those, minimum total distance; remaining ties prefer lower detection
/// indices.
///
/// Solved as one square assignment where an admissible pair costs
/// `d − C + i·ε` (`C = radius·(k+2)`, `k = min(n, m)`) and everything else
/// costs 0. Any extra admissible pair lowers the total by more than any
/// distance sum can raise it, so cardinality dominates; `ε` is small enough
/// (`n²ε ≤ 1e-10·radius`) to only separate exact ties.
pub fn match_points<T: Real>(
    dets: &[WorldPoint<T>],
    gts: &[WorldPoint<T>],
    radius: T,
) -> Result<FrameMatching, MetricsError> {
    let radius = radius.as_f64();
    check_radius(radius)?;
    let (n, m) = (dets.len(), gts.len());
    let size = n.max(m);
    let k = n.min(m) as f64;
    let big = radius * (k + 2.0);
    let eps = radius * 1e-10 / ((n + 1) * (n + 1)) as f64;

    let mut admissible = vec![None; n * m];
    let mut costs = vec![0.0; size * size];
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let dist = d.distance(g).as_f64();
            if dist <= radius {
                admissible[i * m + j] = Some(dist);
                costs[i * size + j] = dist - big + i as f64 * eps;
            }
        }
    }

    let assignment = assignment::solve_square(&costs, size);
    let mut out = FrameMatching::default();
    let mut gt_matched = vec![false; m];
    for (i, &j) in assignment.iter().enumerate().take(n) {
        match (j < m).then(|| admissible[i * m + j]).flatten() {
            Some(distance) => {
                gt_matched[j] = true;
                out.pairs.push(MatchPair {
                    detection: i,
                    ground_truth: j,
                    distance,
                });
            }
            None => out.false_positives.push(i),
        }
    }
    out.false_negatives = (0..m).filter(|&j| !gt_matched[j]).collect();
    Ok(out)
}

pub fn match_frame<T: Real>(
    dets: &DetectionSet<T>,
    gts: &DetectionSet<T>,
    radius: T,
) -> Result<FrameMatching, MetricsError> {
    let d: Vec<_> = dets.points().collect();
    let g: Vec<_> = gts.points().collect();
    match_points(&d, &g, radius)
}

/// Raw per-frame or aggregate counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub n_gt: usize,
    /// Σ over matched pairs of `1 − d/radius`.
    pub localization: f64,
}

impl Counts {
    pub fn from_matching(m: &FrameMatching, radius: f64) -> Self {
        Counts {
            tp: m.pairs.len(),
            fp: m.false_positives.len(),
            fn_: m.false_negatives.len(),
            n_gt: m.pairs.len() + m.false_negatives.len(),
            localization: m.pairs.iter().map(|p| 1.0 - p.distance / radius).sum(),
        }
    }

    pub fn n_det(&self) -> usize {
        self.tp + self.fp
    }

    pub fn metrics(&self) -> Metrics {
        if self.n_gt == 0 && self.n_det() == 0 {
            return Metrics {
                moda: Some(1.0),
                modp: Some(1.0),
                precision: Some(1.0),
                recall: Some(1.0),
            };
        }
        let ratio = |num: f64, den: usize| (den > 0).then(|| num / den as f64);
        Metrics {
            moda: ratio(self.n_gt as f64 - (self.fn_ + self.fp) as f64, self.n_gt),
            modp: ratio(self.localization, self.tp),
            precision: ratio(self.tp as f64, self.n_det()),
            recall: ratio(self.tp as f64, self.n_gt),
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.n_gt += o.n_gt;
        self.localization += o.localization;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_gt: usize,
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_gt: usize,
    pub match_radius: f64,
    /// Metrics that could not be computed, or degenerate-input notes.
    pub warnings: Vec<String>,
    pub per_frame: Vec<FrameReport>,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            moda: self.moda,
            modp: self.modp,
            precision: self.precision,
            recall: self.recall,
        }
    }
}

/// Matches every frame and aggregates counts over the whole set.
pub fn evaluate<T: Real>(
    frames: &[(DetectionSet<T>, DetectionSet<T>)],
    radius: T,
) -> Result<EvalReport, MetricsError> {
    let r = radius.as_f64();
    check_radius(r)?;
    if frames.is_empty() {
        return Err(MetricsError::NoFrames);
    }
    let mut total = Counts::default();
    let mut per_frame = Vec::with_capacity(frames.len());
    for (dets, gts) in frames {
        if dets.frame_id() != gts.frame_id() {
            return Err(MetricsError::FrameMismatch {
                detections: dets.frame_id().to_string(),
                ground_truth: gts.frame_id().to_string(),
            });
        }
        let counts = Counts::from_matching(&match_frame(dets, gts, radius)?, r);
        let m = counts.metrics();
        per_frame.push(FrameReport {
            frame_id: gts.frame_id().to_string(),
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            n_gt: counts.n_gt,
            moda: m.moda,
            modp: m.modp,
            precision: m.precision,
            recall: m.recall,
        });
        total += counts;
    }
    let m = total.metrics();
    let mut warnings = Vec::new();
    if total.n_gt == 0 && total.n_det() == 0 {
        warnings.push("no ground truth and no detections; all metrics reported as 1.0".to_string());
    }
    for (name, value) in [
        ("moda", m.moda),
        ("modp", m.modp),
        ("precision", m.precision),
        ("recall", m.recall),
    ] {
        if value.is_none() {
            warnings.push(format!("{name} undefined (zero denominator)"));
        }
    }
    Ok(EvalReport {
        moda: m.moda,
        modp: m.modp,
        precision: m.precision,
        recall: m.recall,
        tp: total.tp,
        fp: total.fp,
        fn_: total.fn_,
        n_gt: total.n_gt,
        match_radius: r,
        warnings,
        per_frame,
    })
}

/// Formats an optional metric for human-readable output.
pub fn display_metric(value: Option<f64>) -> String {
    value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}
