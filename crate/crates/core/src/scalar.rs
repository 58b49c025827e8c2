//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the geometry, heatmap and metrics code.
///
/// Implemented for `f32` and `f64`. File formats and the orchestrator work in
/// `f64` (detections) and `f32` (raster payloads) and convert at the edges.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; infallible for the supported types.
    fn lit(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_count(value: usize) -> Self {
        <Self as FromPrimitive>::from_usize(value).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
