//! Pixel containers shared by every stage of the pipeline.
//!
//! [`Image`] holds linear, non-negative intensities (LDR exposures, HDR
//! radiance, warped frames, alpha and coverage maps). [`FlowField`] holds
//! per-pixel displacements in pixels. Both are row-major and store `f64`
//! so the motion fitting and the metric stay well inside their tolerances;
//! conversion to `f32` happens only at the file boundary.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wrap a row-major buffer, checking the container invariants.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::InvalidImage("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} is not finite and non-negative"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constructor for buffers produced by operations that preserve the
    /// invariants (convex combinations of valid images).
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Build an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64 + Sync,
    ) -> Result<Self> {
        let mut data = vec![0.0; width * height * channels];
        if width > 0 {
            data.par_chunks_mut(width * channels)
                .enumerate()
                .for_each(|(y, row)| {
                    for x in 0..width {
                        for c in 0..channels {
                            row[x * channels + c] = f(x, y, c);
                        }
                    }
                });
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Same width, height and channel count.
    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Apply `f` to every sample. `f` must keep values finite and non-negative.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Result<Image> {
        let data = self.data.par_iter().map(|v| f(*v)).collect();
        Image::new(self.width, self.height, self.channels, data)
    }

    /// Luminance (Rec. 709 weights) for RGB, the channel itself for gray.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .par_chunks(3)
            .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
            .collect();
        Image::from_parts(self.width, self.height, 1, data)
    }

    /// Crop the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Image::from_parts(w, h, self.channels, data))
    }
}

/// Per-pixel `(u, v)` displacement in pixels.
///
/// A flow aligned with image A maps A's pixel `x` to `x + F(x)` in the
/// other image, so warping samples the other image at `x + F(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFlow(format!("empty flow {width}x{height}")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Error::InvalidFlow("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidFlow(format!(
                "buffer holds {} values, expected {expected}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFlow("non-finite displacement".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 2);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_parts(width, height, vec![0.0; width * height * 2])
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        let data = (0..width * height).flat_map(|_| [u, v]).collect();
        Self::from_parts(width, height, data)
    }

    /// Build a flow by evaluating `f(x, y) -> (u, v)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [f64; 2] + Sync,
    ) -> Result<Self> {
        let mut data = vec![0.0; width * height * 2];
        if width > 0 {
            data.par_chunks_mut(width * 2).enumerate().for_each(|(y, row)| {
                for x in 0..width {
                    let [u, v] = f(x, y);
                    row[2 * x] = u;
                    row[2 * x + 1] = v;
                }
            });
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        let i = 2 * (y * self.width + x);
        [self.data[i], self.data[i + 1]]
    }

    pub(crate) fn ensure_dims(&self, w: usize, h: usize, what: &str) -> Result<()> {
        if self.dims() == (w, h) {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "{what}: flow is {}x{}, expected {w}x{h}",
                self.width, self.height
            )))
        }
    }

    /// Multiply every displacement by `k`.
    pub fn scaled(&self, k: f64) -> FlowField {
        FlowField::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|v| v * k).collect(),
        )
    }

    /// Pixel-wise `self + other`.
    pub fn add(&self, other: &FlowField) -> Result<FlowField> {
        other.ensure_dims(self.width, self.height, "flow addition")?;
        Ok(FlowField::from_parts(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Euclidean norm of every displacement.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.chunks(2).map(|p| p[0].hypot(p[1])).collect()
    }

    /// Largest per-pixel Euclidean distance to `other`.
    pub fn max_abs_diff(&self, other: &FlowField) -> f64 {
        self.data
            .chunks(2)
            .zip(other.data.chunks(2))
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .fold(0.0, f64::max)
    }
}

/// Binary per-pixel mask, `true` meaning valid / selected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(format!(
                "mask buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn not(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    /// Grow the `true` region by `radius` pixels (Chebyshev distance).
    pub fn dilate(&self, radius: usize) -> Mask {
        let (w, h) = (self.width, self.height);
        let r = radius as isize;
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if !self.get(x, y) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                            out[ny as usize * w + nx as usize] = true;
                        }
                    }
                }
            }
        }
        Mask {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Pixels within `border` of the image edge are cleared.
    pub fn without_border(&self, border: usize) -> Mask {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                if x < border || y < border || x + border >= self.width || y + border >= self.height {
                    out.set(x, y, false);
                }
            }
        }
        out
    }
}
