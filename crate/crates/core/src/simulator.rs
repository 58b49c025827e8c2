//! Seeded synthetic scenes and noisy detectors.
//!
//! Stream order (part of the fixture contract, see [`crate::rng`]):
//!
//! * scene, per frame: head count (Poisson inversion, or none when exact),
//!   then for each person repeated `(x, y)` open-uniform draws until the
//!   candidate respects `min_separation`.
//! * detector, per frame: for each ground truth in order one miss coin, and
//!   if kept one normal pair (always drawn) plus one score draw when the
//!   score law is uniform; then the false-positive count followed by
//!   `(x, y[, score])` per false positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::AnnotatedFrame;
use crate::geometry::{GroundGrid, WorldPoint};
use crate::heatmap::{Detection, DetectionSet};
use crate::rng::{Stream, MAX_POISSON_MEAN};

/// Placement attempts per person before giving up.
pub const RETRY_BUDGET: usize = 10_000;
/// Fraction of the area that separation disks may cover.
const MAX_COVERAGE: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene parameters: {0}")]
    InvalidScene(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("frame {frame}: could not place person {person} after {RETRY_BUDGET} attempts")]
    InfeasibleScene { frame: usize, person: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum HeadCount {
    Poisson { mean: f64 },
    Exact { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub grid: GroundGrid<f64>,
    pub n_frames: usize,
    pub people: HeadCount,
    pub min_separation: f64,
    pub seed: u64,
}

impl SceneParams {
    pub fn poisson(
        grid: GroundGrid<f64>,
        n_frames: usize,
        mean_people: f64,
        min_separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            grid,
            n_frames,
            people: HeadCount::Poisson { mean: mean_people },
            min_separation,
            seed,
        }
    }

    pub fn exact(
        grid: GroundGrid<f64>,
        n_frames: usize,
        count: usize,
        min_separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            people: HeadCount::Exact { count },
            ..Self::poisson(grid, n_frames, 0.0, min_separation, seed)
        }
    }

    /// Most people a frame may hold under `min_separation`.
    pub fn capacity(&self) -> usize {
        if self.min_separation == 0.0 {
            return usize::MAX;
        }
        let (ex, ey) = self.grid.extent();
        let disk = std::f64::consts::PI * self.min_separation * self.min_separation / 4.0;
        (MAX_COVERAGE * ex * ey / disk).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return bad(format!(
                "min_separation must be ≥ 0, got {}",
                self.min_separation
            ));
        }
        let expected = match self.people {
            HeadCount::Poisson { mean } => {
                if !(0.0..=MAX_POISSON_MEAN).contains(&mean) {
                    return bad(format!(
                        "mean_people must lie in [0, {MAX_POISSON_MEAN}], got {mean}"
                    ));
                }
                mean
            }
            HeadCount::Exact { count } => count as f64,
        };
        if expected > self.capacity() as f64 {
            return bad(format!(
                "{expected} people per frame cannot keep {} m apart in this area (capacity {})",
                self.min_separation,
                self.capacity()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ScoreLaw {
    #[default]
    One,
    Uniform {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NoiseModel {
    pub p_miss: f64,
    /// Poisson mean of false positives per frame.
    pub fp_per_frame: f64,
    /// Standard deviation of the per-axis Gaussian jitter, meters.
    pub loc_sigma: f64,
    pub score: ScoreLaw,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidNoise(m));
        if !(0.0..=1.0).contains(&self.p_miss) {
            return bad(format!("p_miss must lie in [0, 1], got {}", self.p_miss));
        }
        if !(0.0..=MAX_POISSON_MEAN).contains(&self.fp_per_frame) {
            return bad(format!(
                "fp_per_frame must lie in [0, {MAX_POISSON_MEAN}], got {}",
                self.fp_per_frame
            ));
        }
        if !(self.loc_sigma >= 0.0 && self.loc_sigma.is_finite()) {
            return bad(format!("loc_sigma must be ≥ 0, got {}", self.loc_sigma));
        }
        if let ScoreLaw::Uniform { low, high } = self.score {
            if !(0.0 <= low && low <= high && high <= 1.0) {
                return bad(format!(
                    "score bounds must satisfy 0 ≤ low ≤ high ≤ 1, got [{low}, {high}]"
                ));
            }
        }
        Ok(())
    }

    fn draw_score(&self, s: &mut Stream) -> f64 {
        match self.score {
            ScoreLaw::One => 1.0,
            ScoreLaw::Uniform { low, high } => s.uniform_range(low, high),
        }
    }
}

pub fn frame_id(index: usize) -> String {
    format!("{index:08}")
}

fn uniform_point(grid: &GroundGrid<f64>, s: &mut Stream) -> WorldPoint<f64> {
    let (ex, ey) = grid.extent();
    let o = grid.origin();
    WorldPoint::new(o.x + ex * s.uniform_open(), o.y + ey * s.uniform_open())
}

/// Ground-truth scenes. Frame ids are zero-padded indices.
pub fn gen_scene(params: &SceneParams) -> Result<Vec<AnnotatedFrame>, SimError> {
    params.validate()?;
    let mut s = Stream::new(params.seed);
    let capacity = params.capacity();
    let sep = params.min_separation;
    let mut frames = Vec::with_capacity(params.n_frames);
    for frame in 0..params.n_frames {
        let count = match params.people {
            HeadCount::Poisson { mean } => s.poisson(mean) as usize,
            HeadCount::Exact { count } => count,
        }
        .min(capacity);
        let mut placed: Vec<WorldPoint<f64>> = Vec::with_capacity(count);
        for person in 0..count {
            let mut attempts = 0;
            loop {
                if attempts == RETRY_BUDGET {
                    return Err(SimError::InfeasibleScene { frame, person });
                }
                attempts += 1;
                let p = uniform_point(&params.grid, &mut s);
                let clear = params.grid.contains(&p)
                    && placed.iter().all(|q| {
                        let d = p.distance(q);
                        d > 0.0 && d >= sep
                    });
                if clear {
                    placed.push(p);
                    break;
                }
            }
        }
        let id = frame_id(frame);
        let dets = placed
            .into_iter()
            .map(|location| Detection {
                location,
                score: 1.0,
            })
            .collect();
        frames.push(AnnotatedFrame {
            gts: DetectionSet::new(id.clone(), dets).expect("placed points are distinct"),
            frame_id: id,
            timestamp: None,
        });
    }
    Ok(frames)
}

/// Noisy detections of `frames`. False positives are uniform over `grid`;
/// jittered survivors may leave it. A detection landing exactly on an
/// earlier one in the same frame is discarded.
pub fn simulate_detector(
    frames: &[AnnotatedFrame],
    grid: &GroundGrid<f64>,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<DetectionSet<f64>>, SimError> {
    noise.validate()?;
    let mut s = Stream::new(seed);
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut dets: Vec<Detection<f64>> = Vec::with_capacity(frame.gts.len() + 2);
        let push = |d: Detection<f64>, dets: &mut Vec<Detection<f64>>| {
            if !dets.iter().any(|e| e.location == d.location) {
                dets.push(d);
            }
        };
        for gt in frame.gts.points() {
            let missed = s.uniform() < noise.p_miss;
            if missed {
                continue;
            }
            let (nx, ny) = s.normal_pair();
            let score = noise.draw_score(&mut s);
            let location =
                WorldPoint::new(gt.x + noise.loc_sigma * nx, gt.y + noise.loc_sigma * ny);
            push(Detection { location, score }, &mut dets);
        }
        let n_fp = s.poisson(noise.fp_per_frame);
        for _ in 0..n_fp {
            let location = uniform_point(grid, &mut s);
            let score = noise.draw_score(&mut s);
            push(Detection { location, score }, &mut dets);
        }
        out.push(
            DetectionSet::new(frame.frame_id.clone(), dets)
                .expect("simulated detections are valid"),
        );
    }
    Ok(out)
}
