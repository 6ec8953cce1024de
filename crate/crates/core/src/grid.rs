//! Dense real-valued grids: latent feature maps and images.

use crate::error::{Error, Result};

/// Real `height x width x channels` grid, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::dim(format!(
                "buffer of length {} cannot hold a {height}x{width}x{channels} map",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a map by evaluating `f(row, col, channel)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    /// The `channels`-long vector stored at one spatial cell.
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = self.index(y, x, 0);
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let start = self.index(y, x, 0);
        let c = self.channels;
        &mut self.data[start..start + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &FeatureMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &FeatureMap) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Element-wise `self -= other`.
    pub fn sub_assign(&mut self, other: &FeatureMap) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Extracts one channel as a single-channel map.
    pub fn channel(&self, c: usize) -> FeatureMap {
        FeatureMap::from_fn(self.height, self.width, 1, |y, x, _| self.get(y, x, c))
    }
}

/// Image with `channels` in {1, 3}; pixels nominally in [0, 1].
///
/// Values are not clamped on construction so that float inputs can be
/// analysed without clipping; [`Image::clamped`] applies the output range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: FeatureMap,
}

impl Image {
    pub fn new(pixels: FeatureMap) -> Result<Self> {
        if !matches!(pixels.channels(), 1 | 3) {
            return Err(Error::dim(format!(
                "images have 1 or 3 channels, got {}",
                pixels.channels()
            )));
        }
        if pixels.height() == 0 || pixels.width() == 0 {
            return Err(Error::dim("image has zero size"));
        }
        Ok(Self { pixels })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(FeatureMap::from_fn(height, width, channels, f))
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn channels(&self) -> usize {
        self.pixels.channels()
    }

    pub fn pixels(&self) -> &FeatureMap {
        &self.pixels
    }

    pub fn into_pixels(self) -> FeatureMap {
        self.pixels
    }

    pub fn clamped(mut self) -> Self {
        self.pixels
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    pub fn mean_abs_error(&self, other: &Image) -> Result<f64> {
        self.pixels.check_same_shape(&other.pixels)?;
        let n = self.pixels.as_slice().len() as f64;
        Ok(self
            .pixels
            .as_slice()
            .iter()
            .zip(other.pixels.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n)
    }

    pub fn mean_squared_error(&self, other: &Image) -> Result<f64> {
        self.pixels.check_same_shape(&other.pixels)?;
        let n = self.pixels.as_slice().len() as f64;
        Ok(self
            .pixels
            .as_slice()
            .iter()
            .zip(other.pixels.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }
}
