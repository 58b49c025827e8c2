//! World, grid and camera coordinates.
//!
//! The ground plane is `z = 0`. Grid rows run along world `x`, columns along
//! world `y`; cell `(row, col)` covers the half-open square
//! `[ox + row·s, ox + (row+1)·s) × [oy + col·s, oy + (col+1)·s)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x}, {y}) lies outside the area of interest")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell ({row}, {col}) is not part of a {n_rows}x{n_cols} grid")]
    InvalidCell {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("point lies at or behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("unknown grid preset `{0}` (expected `wildtrack` or `multiviewx`)")]
    UnknownPreset(String),
}

/// A location on the ground plane in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Real> WorldPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn cast<U: Real>(self) -> WorldPoint<U> {
        WorldPoint::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Real> std::ops::Add for WorldPoint<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Named area-of-interest presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    /// 12 m × 36 m.
    Wildtrack,
    /// 16 m × 25 m.
    Multiviewx,
}

impl GridPreset {
    pub const DEFAULT_CELL_SIZE: f64 = 0.1;

    /// Extent along world `x` and `y`, in meters.
    pub fn extent(self) -> (f64, f64) {
        match self {
            GridPreset::Wildtrack => (12.0, 36.0),
            GridPreset::Multiviewx => (16.0, 25.0),
        }
    }

    pub fn grid<T: Real>(self) -> GroundGrid<T> {
        self.grid_with_cell_size(T::lit(Self::DEFAULT_CELL_SIZE))
            .expect("preset grids are valid")
    }

    pub fn grid_with_cell_size<T: Real>(
        self,
        cell_size: T,
    ) -> Result<GroundGrid<T>, GeometryError> {
        let (ex, ey) = self.extent();
        GroundGrid::from_extent(WorldPoint::default(), T::lit(ex), T::lit(ey), cell_size)
    }

    pub fn name(self) -> &'static str {
        match self {
            GridPreset::Wildtrack => "wildtrack",
            GridPreset::Multiviewx => "multiviewx",
        }
    }
}

impl FromStr for GridPreset {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wildtrack" | "wt" => Ok(GridPreset::Wildtrack),
            "multiviewx" | "mvx" => Ok(GridPreset::Multiviewx),
            _ => Err(GeometryError::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for GridPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Discretized bird's-eye-view area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr", bound = "T: Real")]
pub struct GroundGrid<T = f64> {
    origin: WorldPoint<T>,
    cell_size: T,
    n_rows: usize,
    n_cols: usize,
}

impl<T: Real> GroundGrid<T> {
    pub fn new(
        origin: WorldPoint<T>,
        cell_size: T,
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self, GeometryError> {
        if !(cell_size > T::zero()) || !cell_size.is_finite() {
            return Err(GeometryError::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(GeometryError::InvalidGrid(format!(
                "grid dimensions must be positive, got {n_rows}x{n_cols}"
            )));
        }
        if !origin.is_finite() {
            return Err(GeometryError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            n_rows,
            n_cols,
        })
    }

    /// Builds a grid covering `extent_x × extent_y` meters; dimensions are
    /// rounded to the nearest whole cell.
    pub fn from_extent(
        origin: WorldPoint<T>,
        extent_x: T,
        extent_y: T,
        cell_size: T,
    ) -> Result<Self, GeometryError> {
        if !(cell_size > T::zero()) {
            return Err(GeometryError::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let rows = (extent_x / cell_size).round();
        let cols = (extent_y / cell_size).round();
        if !(rows >= T::one()) || !(cols >= T::one()) {
            return Err(GeometryError::InvalidGrid(format!(
                "extent {extent_x}x{extent_y} smaller than one cell"
            )));
        }
        Self::new(
            origin,
            cell_size,
            rows.as_f64() as usize,
            cols.as_f64() as usize,
        )
    }

    pub fn origin(&self) -> WorldPoint<T> {
        self.origin
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extent along `x` and `y` in meters.
    pub fn extent(&self) -> (T, T) {
        (
            self.cell_size * T::from_count(self.n_rows),
            self.cell_size * T::from_count(self.n_cols),
        )
    }

    pub fn contains(&self, p: &WorldPoint<T>) -> bool {
        self.world_to_cell(p).is_ok()
    }

    pub fn contains_cell(&self, c: CellIndex) -> bool {
        c.row < self.n_rows && c.col < self.n_cols
    }

    pub fn flat_index(&self, c: CellIndex) -> usize {
        c.row * self.n_cols + c.col
    }

    pub fn cell_of_flat(&self, idx: usize) -> CellIndex {
        CellIndex::new(idx / self.n_cols, idx % self.n_cols)
    }

    /// Returns the cell whose half-open square contains `p`.
    pub fn world_to_cell(&self, p: &WorldPoint<T>) -> Result<CellIndex, GeometryError> {
        let out = || GeometryError::OutOfBounds {
            x: p.x.as_f64(),
            y: p.y.as_f64(),
        };
        let (ex, ey) = self.extent();
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        if !(dx >= T::zero() && dx < ex && dy >= T::zero() && dy < ey) {
            return Err(out());
        }
        // Division can round up to n for points a hair below the upper edge.
        let row = ((dx / self.cell_size).floor().as_f64() as usize).min(self.n_rows - 1);
        let col = ((dy / self.cell_size).floor().as_f64() as usize).min(self.n_cols - 1);
        Ok(CellIndex::new(row, col))
    }

    /// Center of cell `c`.
    pub fn cell_to_world(&self, c: CellIndex) -> Result<WorldPoint<T>, GeometryError> {
        if !self.contains_cell(c) {
            return Err(GeometryError::InvalidCell {
                row: c.row,
                col: c.col,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        Ok(self.cell_center(c))
    }

    pub(crate) fn cell_center(&self, c: CellIndex) -> WorldPoint<T> {
        let half = T::lit(0.5);
        WorldPoint::new(
            self.origin.x + (T::from_count(c.row) + half) * self.cell_size,
            self.origin.y + (T::from_count(c.col) + half) * self.cell_size,
        )
    }

    pub fn cast<U: Real>(&self) -> GroundGrid<U> {
        GroundGrid {
            origin: self.origin.cast(),
            cell_size: U::lit(self.cell_size.as_f64()),
            n_rows: self.n_rows,
            n_cols: self.n_cols,
        }
    }
}

/// On-disk grid description: `{origin: [x, y], cell_size, n_rows, n_cols}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    origin: [f64; 2],
    cell_size: f64,
    n_rows: usize,
    n_cols: usize,
}

impl<T: Real> TryFrom<GridRepr> for GroundGrid<T> {
    type Error = GeometryError;

    fn try_from(r: GridRepr) -> Result<Self, Self::Error> {
        GroundGrid::new(
            WorldPoint::new(T::lit(r.origin[0]), T::lit(r.origin[1])),
            T::lit(r.cell_size),
            r.n_rows,
            r.n_cols,
        )
    }
}

impl<T: Real> From<GroundGrid<T>> for GridRepr {
    fn from(g: GroundGrid<T>) -> Self {
        GridRepr {
            origin: [g.origin.x.as_f64(), g.origin.y.as_f64()],
            cell_size: g.cell_size.as_f64(),
            n_rows: g.n_rows,
            n_cols: g.n_cols,
        }
    }
}

/// Grid as written in configuration: a preset name or a full description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Preset(GridPreset),
    Explicit(GroundGrid<f64>),
}

impl GridSpec {
    pub fn resolve(&self) -> GroundGrid<f64> {
        match self {
            GridSpec::Preset(p) => p.grid(),
            GridSpec::Explicit(g) => *g,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Preset(GridPreset::Wildtrack)
    }
}

/// Row-major 3×3 matrix.
pub type Mat3<T> = [[T; 3]; 3];

fn mat_vec<T: Real>(m: &Mat3<T>, v: [T; 3]) -> [T; 3] {
    let row = |r: &[T; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    [row(&m[0]), row(&m[1]), row(&m[2])]
}

/// Max absolute entry of `R·Rᵀ − I`.
fn orthonormality_error<T: Real>(r: &Mat3<T>) -> T {
    let mut worst = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            let dot = r[i][0] * r[j][0] + r[i][1] * r[j][1] + r[i][2] * r[j][2];
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Pinhole camera with world→camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration<T = f64> {
    intrinsics: Mat3<T>,
    rotation: Mat3<T>,
    translation: [T; 3],
    image_width: u32,
    image_height: u32,
}

impl<T: Real> CameraCalibration<T> {
    pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

    pub fn new(
        intrinsics: Mat3<T>,
        rotation: Mat3<T>,
        translation: [T; 3],
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidCalibration(m));
        let all = intrinsics
            .iter()
            .flatten()
            .chain(rotation.iter().flatten())
            .chain(translation.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if !(intrinsics[0][0] > T::zero()) || !(intrinsics[1][1] > T::zero()) {
            return bad("focal lengths must be positive".into());
        }
        if image_width == 0 || image_height == 0 {
            return bad("image dimensions must be positive".into());
        }
        let deviation = orthonormality_error(&rotation);
        if deviation.as_f64() > Self::ORTHONORMAL_TOLERANCE {
            return bad(format!(
                "rotation is not orthonormal (max |R·Rᵀ − I| = {deviation})"
            ));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            image_width,
            image_height,
        })
    }

    pub fn intrinsics(&self) -> &Mat3<T> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &[T; 3] {
        &self.translation
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.image_width, self.image_height)
    }

    /// Projects a ground point to pixel coordinates `(u, v)` via `K·(R·X + t)`.
    /// Results outside the image are returned as-is.
    pub fn project(&self, p: &WorldPoint<T>) -> Result<(T, T), GeometryError> {
        let rotated = mat_vec(&self.rotation, [p.x, p.y, T::zero()]);
        let cam = [
            rotated[0] + self.translation[0],
            rotated[1] + self.translation[1],
            rotated[2] + self.translation[2],
        ];
        if !(cam[2] > T::zero()) {
            return Err(GeometryError::BehindCamera {
                depth: cam[2].as_f64(),
            });
        }
        let h = mat_vec(&self.intrinsics, cam);
        Ok((h[0] / h[2], h[1] / h[2]))
    }
}

/// Free-function form of [`GroundGrid::world_to_cell`].
pub fn world_to_cell<T: Real>(
    p: &WorldPoint<T>,
    grid: &GroundGrid<T>,
) -> Result<CellIndex, GeometryError> {
    grid.world_to_cell(p)
}

/// Free-function form of [`GroundGrid::cell_to_world`].
pub fn cell_to_world<T: Real>(
    c: CellIndex,
    grid: &GroundGrid<T>,
) -> Result<WorldPoint<T>, GeometryError> {
    grid.cell_to_world(c)
}

pub fn project_to_image<T: Real>(
    p: &WorldPoint<T>,
    calib: &CameraCalibration<T>,
) -> Result<(T, T), GeometryError> {
    calib.project(p)
}

/// Per-camera calibration document:
/// `{intrinsics: [9], rotation: [9], translation: [3], image_size: [w, h]}`,
/// matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub intrinsics: [f64; 9],
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub image_size: [u32; 2],
}

impl CalibrationFile {
    pub fn to_calibration<T: Real>(&self) -> Result<CameraCalibration<T>, GeometryError> {
        let m = |v: &[f64; 9]| -> Mat3<T> {
            std::array::from_fn(|r| std::array::from_fn(|c| T::lit(v[r * 3 + c])))
        };
        CameraCalibration::new(
            m(&self.intrinsics),
            m(&self.rotation),
            self.translation.map(T::lit),
            self.image_size[0],
            self.image_size[1],
        )
    }

    pub fn from_calibration<T: Real>(c: &CameraCalibration<T>) -> Self {
        let flat = |m: &Mat3<T>| -> [f64; 9] { std::array::from_fn(|i| m[i / 3][i % 3].as_f64()) };
        CalibrationFile {
            intrinsics: flat(&c.intrinsics),
            rotation: flat(&c.rotation),
            translation: c.translation.map(|v| v.as_f64()),
            image_size: [c.image_width, c.image_height],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const K: Mat3<f64> = [[1000.0, 0.0, 960.0], [0.0, 1000.0, 540.0], [0.0, 0.0, 1.0]];
    const IDENTITY: Mat3<f64> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn wildtrack() -> GroundGrid<f64> {
        GridPreset::Wildtrack.grid()
    }

    fn test_camera() -> CameraCalibration<f64> {
        CameraCalibration::new(K, IDENTITY, [0.0, 0.0, 5.0], 1920, 1080).unwrap()
    }

    #[test]
    fn presets_have_expected_dimensions() {
        let g = wildtrack();
        assert_eq!((g.n_rows(), g.n_cols()), (120, 360));
        let m: GroundGrid<f64> = GridPreset::Multiviewx.grid();
        assert_eq!((m.n_rows(), m.n_cols()), (160, 250));
        assert_eq!(
            "WildTrack".parse::<GridPreset>().unwrap(),
            GridPreset::Wildtrack
        );
        assert!("campus".parse::<GridPreset>().is_err());
    }

    #[test]
    fn origin_maps_to_first_cell() {
        let g = wildtrack();
        assert_eq!(g.world_to_cell(&g.origin()).unwrap(), CellIndex::new(0, 0));
    }

    #[test]
    fn far_corner_maps_to_last_cell() {
        let g = wildtrack();
        let c = g.world_to_cell(&WorldPoint::new(11.95, 35.95)).unwrap();
        assert_eq!(c, CellIndex::new(119, 359));
    }

    #[test]
    fn upper_boundary_is_exclusive() {
        let g = wildtrack();
        assert!(matches!(
            g.world_to_cell(&WorldPoint::new(12.0, 0.0)),
            Err(GeometryError::OutOfBounds { .. })
        ));
        assert!(g.world_to_cell(&WorldPoint::new(0.0, 36.0)).is_err());
        assert!(g.world_to_cell(&WorldPoint::new(-1e-12, 0.0)).is_err());
        assert!(g.world_to_cell(&WorldPoint::new(f64::NAN, 0.0)).is_err());
        // A hair below the edge still belongs to the last cell.
        let c = g
            .world_to_cell(&WorldPoint::new(12.0 - 1e-13, 0.0))
            .unwrap();
        assert_eq!(c.row, 119);
    }

    #[test]
    fn cell_centers() {
        let g = wildtrack();
        let p = g.cell_to_world(CellIndex::new(0, 0)).unwrap();
        assert_relative_eq!(p.x, 0.05, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.05, epsilon = 1e-12);
        let p = g.cell_to_world(CellIndex::new(119, 359)).unwrap();
        assert_relative_eq!(p.x, 11.95, epsilon = 1e-12);
        assert_relative_eq!(p.y, 35.95, epsilon = 1e-12);
        assert!(matches!(
            g.cell_to_world(CellIndex::new(120, 0)),
            Err(GeometryError::InvalidCell { .. })
        ));
    }

    #[test]
    fn cell_round_trip_is_exhaustive_identity() {
        for (cell_size, rows, cols) in [(0.1, 13, 7), (0.25, 9, 11), (0.07, 16, 16)] {
            let g = GroundGrid::new(WorldPoint::new(-1.3, 2.7), cell_size, rows, cols).unwrap();
            for r in 0..rows {
                for c in 0..cols {
                    let cell = CellIndex::new(r, c);
                    assert_eq!(
                        g.world_to_cell(&g.cell_to_world(cell).unwrap()).unwrap(),
                        cell
                    );
                }
            }
        }
        let g32: GroundGrid<f32> = GridPreset::Wildtrack.grid();
        for r in 0..g32.n_rows() {
            for c in 0..g32.n_cols() {
                let cell = CellIndex::new(r, c);
                assert_eq!(
                    g32.world_to_cell(&g32.cell_to_world(cell).unwrap())
                        .unwrap(),
                    cell
                );
            }
        }
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(GroundGrid::new(WorldPoint::new(0.0, 0.0), 0.0, 1, 1).is_err());
        assert!(GroundGrid::new(WorldPoint::new(0.0, 0.0), -0.1, 1, 1).is_err());
        assert!(GroundGrid::new(WorldPoint::new(0.0, 0.0), 0.1, 0, 1).is_err());
        assert!(GroundGrid::from_extent(WorldPoint::new(0.0, 0.0), 0.01, 1.0, 0.1).is_err());
    }

    #[test]
    fn grid_json_round_trip() {
        let g = GroundGrid::new(WorldPoint::new(-3.0, -9.0), 0.025, 480, 1440).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(
            text,
            r#"{"origin":[-3.0,-9.0],"cell_size":0.025,"n_rows":480,"n_cols":1440}"#
        );
        let back: GroundGrid<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"origin":[0,0],"cell_size":0,"n_rows":1,"n_cols":1}"#;
        assert!(serde_json::from_str::<GroundGrid<f64>>(bad).is_err());
        let spec: GridSpec = serde_json::from_str(r#""multiviewx""#).unwrap();
        assert_eq!(spec.resolve().n_rows(), 160);
    }

    #[test]
    fn principal_point_projection() {
        let cam = test_camera();
        let (u, v) = cam.project(&WorldPoint::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(u, 960.0, epsilon = 1e-9);
        assert_relative_eq!(v, 540.0, epsilon = 1e-9);
    }

    #[test]
    fn lateral_offset_projection() {
        let cam = test_camera();
        let (u, v) = cam.project(&WorldPoint::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(u, 1160.0, epsilon = 1e-9);
        assert_relative_eq!(v, 540.0, epsilon = 1e-9);
        // Determinism.
        assert_eq!(cam.project(&WorldPoint::new(1.0, 0.0)).unwrap(), (u, v));
    }

    #[test]
    fn behind_camera_rejected() {
        let k = [[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]];
        let at_plane = CameraCalibration::new(k, IDENTITY, [0.0; 3], 640, 480).unwrap();
        assert!(matches!(
            at_plane.project(&WorldPoint::new(0.5, 0.5)),
            Err(GeometryError::BehindCamera { .. })
        ));
        let behind = CameraCalibration::new(k, IDENTITY, [0.0, 0.0, -2.0], 640, 480).unwrap();
        assert!(behind.project(&WorldPoint::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn calibration_validation() {
        let skewed = [[1.0, 0.01, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraCalibration::new(K, skewed, [0.0; 3], 10, 10).is_err());
        let mut bad_k = K;
        bad_k[0][0] = 0.0;
        assert!(CameraCalibration::new(bad_k, IDENTITY, [0.0; 3], 10, 10).is_err());
        assert!(CameraCalibration::new(K, IDENTITY, [0.0; 3], 0, 10).is_err());
        assert!(CameraCalibration::new(K, IDENTITY, [0.0, f64::NAN, 0.0], 10, 10).is_err());
    }

    #[test]
    fn calibration_file_round_trip() {
        let doc = r#"{"intrinsics":[1000,0,960,0,1000,540,0,0,1],
                      "rotation":[1,0,0,0,1,0,0,0,1],
                      "translation":[0,0,5],"image_size":[1920,1080]}"#;
        let file: CalibrationFile = serde_json::from_str(doc).unwrap();
        let cam: CameraCalibration<f64> = file.to_calibration().unwrap();
        assert_eq!(cam, test_camera());
        assert_eq!(CalibrationFile::from_calibration(&cam), file);
    }

    proptest! {
        #[test]
        fn snapping_moves_point_at_most_half_diagonal(fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let g = wildtrack();
            let (ex, ey) = g.extent();
            let p = WorldPoint::new(fx * ex * 0.999_999, fy * ey * 0.999_999);
            let c = g.world_to_cell(&p).unwrap();
            let snapped = g.cell_to_world(c).unwrap();
            prop_assert!(p.distance(&snapped) <= g.cell_size() * 2f64.sqrt() / 2.0 + 1e-12);
        }

        #[test]
        fn rotated_cameras_accept_orthonormal_matrices(a in -3.1f64..3.1, b in -3.1f64..3.1) {
            let (sa, ca) = a.sin_cos();
            let (sb, cb) = b.sin_cos();
            // Rz(a)·Rx(b)
            let r = [
                [ca, -sa * cb, sa * sb],
                [sa, ca * cb, -ca * sb],
                [0.0, sb, cb],
            ];
            let cam = CameraCalibration::new(K, r, [0.0, 0.0, 10.0], 640, 480);
            prop_assert!(cam.is_ok());
            let mut bent = r;
            bent[0][0] += 1e-3;
            prop_assert!(CameraCalibration::new(K, bent, [0.0, 0.0, 10.0], 640, 480).is_err());
        }
    }
}
