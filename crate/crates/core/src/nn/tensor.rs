use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

use crate::{Error, Result};

/// Scalar type the layers are generic over (`f32` for training, `f64` for checks).
pub trait Real:
    Float + Sum + AddAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major `(channels, height, width)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets the same data under a new shape with equal element count.
    pub fn reshape(self, channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::from_vec(channels, height, width, self.data)
    }

    #[inline]
    pub fn row(&self, c: usize, r: usize) -> &[T] {
        let start = (c * self.height + r) * self.width;
        &self.data[start..start + self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, r: usize) -> &mut [T] {
        let start = (c * self.height + r) * self.width;
        &mut self.data[start..start + self.width]
    }
}

pub(crate) fn ensure_finite<T: Real>(data: &[T], op: &'static str) -> Result<()> {
    // `v · 0` is zero for finite `v` and NaN otherwise; summing in lanes
    // keeps the scan vectorized.
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let mut chunks = data.chunks_exact(LANES);
    for c in &mut chunks {
        for l in 0..LANES {
            acc[l] += c[l] * T::zero();
        }
    }
    let rest = chunks.remainder().iter().fold(T::zero(), |a, &v| a + v * T::zero());
    if acc.iter().fold(rest, |a, &v| a + v) == T::zero() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}
