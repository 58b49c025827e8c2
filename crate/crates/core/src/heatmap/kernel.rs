use serde::{Deserialize, Serialize};

use super::HeatmapError;
use crate::scalar::Real;

/// Scaling applied to the sampled Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelNormalization {
    /// `exp(-r²/2σ²)`: center is exactly 1.
    #[default]
    PeakOne,
    /// `exp(-r²/2σ²) / (2πσ²)`, the continuous density sampled at cell offsets.
    LiteralPdf,
}

/// Kernel parameters as they appear in configuration. Size and sigma are in
/// grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub size: usize,
    pub sigma: f64,
    pub normalization: KernelNormalization,
}

impl KernelSpec {
    pub const DEFAULT_SIZE: usize = 41;
    pub const DEFAULT_SIGMA: f64 = 5.0;

    pub fn build<T: Real>(&self) -> Result<GaussianKernel<T>, HeatmapError> {
        gaussian_kernel(self.size, T::lit(self.sigma), self.normalization)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            size: Self::DEFAULT_SIZE,
            sigma: Self::DEFAULT_SIGMA,
            normalization: KernelNormalization::default(),
        }
    }
}

/// Square, odd-sized sampled Gaussian centered on its middle cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel<T = f64> {
    size: usize,
    sigma: T,
    normalization: KernelNormalization,
    values: Vec<T>,
}

impl<T: Real> GaussianKernel<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn normalization(&self) -> KernelNormalization {
        self.normalization
    }

    /// Row-major `size × size` samples.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.size + j]
    }

    pub fn center(&self) -> T {
        let h = self.size / 2;
        self.at(h, h)
    }
}

pub fn gaussian_kernel<T: Real>(
    size: usize,
    sigma: T,
    normalization: KernelNormalization,
) -> Result<GaussianKernel<T>, HeatmapError> {
    if size % 2 == 0 {
        return Err(HeatmapError::InvalidKernelSpec(format!(
            "size must be odd, got {size}"
        )));
    }
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(HeatmapError::InvalidKernelSpec(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let half = (size / 2) as isize;
    let two_var = T::lit(2.0) * sigma * sigma;
    let scale = match normalization {
        KernelNormalization::PeakOne => T::one(),
        KernelNormalization::LiteralPdf => T::one() / (T::PI() * two_var),
    };
    let mut values = Vec::with_capacity(size * size);
    for i in -half..=half {
        for j in -half..=half {
            let r2 = T::lit((i * i + j * j) as f64);
            let g = (-r2 / two_var).exp();
            values.push(match normalization {
                KernelNormalization::PeakOne => g,
                KernelNormalization::LiteralPdf => g * scale,
            });
        }
    }
    Ok(GaussianKernel {
        size,
        sigma,
        normalization,
        values,
    })
}
