//! Value types for scalar images and small kernels, plus the norms and
//! quality metrics that the schemas and the benchmark harness share.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel row-major image. `width` counts columns, `height` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    /// Builds a plane, rejecting empty shapes, length mismatches and
    /// non-finite samples.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("image", "non-finite sample"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Internal constructor for buffers whose shape is known to be right.
    /// Finiteness is left to the caller (the schemas check it explicitly).
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self::from_raw(width, height, vec![value; width * height])
    }

    /// Samples `f(row, col)` over the grid.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        ImagePlane::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two planes of equal shape.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> ImagePlane {
        assert!(self.same_shape(other), "shape mismatch in zip_map");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ImagePlane::from_raw(self.width, self.height, data)
    }

    pub fn sub(&self, other: &ImagePlane) -> ImagePlane {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ImagePlane) -> ImagePlane {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> ImagePlane {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &ImagePlane) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copies the rectangle starting at (`row0`, `col0`).
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<ImagePlane> {
        if height == 0 || width == 0 || row0 + height > self.height || col0 + width > self.width {
            return Err(Error::Dimensions(format!(
                "crop {height}x{width} at ({row0},{col0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(ImagePlane::from_fn(width, height, |r, c| {
            self.get(row0 + r, col0 + c)
        }))
    }
}

/// Ordered channel list: one plane for grayscale, three for RGB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelImage {
    channels: Vec<ImagePlane>,
}

impl MultiChannelImage {
    pub fn new(channels: Vec<ImagePlane>) -> Result<Self> {
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::Dimensions(format!(
                "expected 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        if channels.iter().any(|c| !c.same_shape(&channels[0])) {
            return Err(Error::Dimensions("channel shapes differ".into()));
        }
        Ok(Self { channels })
    }

    pub fn gray(plane: ImagePlane) -> Self {
        Self {
            channels: vec![plane],
        }
    }

    pub fn channels(&self) -> &[ImagePlane] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<ImagePlane> {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn is_rgb(&self) -> bool {
        self.channels.len() == 3
    }

    /// Luminance plane used for PSF and inverse-filter estimation.
    pub fn luminance(&self) -> ImagePlane {
        if !self.is_rgb() {
            return self.channels[0].clone();
        }
        let (r, g, b) = (&self.channels[0], &self.channels[1], &self.channels[2]);
        let data = (0..r.len())
            .map(|i| 0.299 * r.data()[i] + 0.587 * g.data()[i] + 0.114 * b.data()[i])
            .collect();
        ImagePlane::from_raw(r.width(), r.height(), data)
    }

    pub fn map_channels(&self, f: impl Fn(&ImagePlane) -> ImagePlane) -> MultiChannelImage {
        MultiChannelImage {
            channels: self.channels.iter().map(f).collect(),
        }
    }
}

/// Small odd-sized row-major grid holding a PSF or an inverse PSF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::Dimensions(format!(
                "kernel dimensions must be odd and positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimensions(format!(
                "kernel data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("kernel", "non-finite coefficient"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            for b in 0..cols {
                data.push(f(a, b));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Unit impulse at the grid center.
    pub fn delta(rows: usize, cols: usize) -> Result<Self> {
        Self::from_fn(rows, cols, |a, b| {
            if a == rows / 2 && b == cols / 2 {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.cols + b]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn center_value(&self) -> f64 {
        let (a, b) = self.center();
        self.get(a, b)
    }

    /// Kernel scaled to unit sum.
    pub fn normalized(&self) -> Result<Kernel> {
        let s = self.sum();
        if s.abs() < 1e-300 || !s.is_finite() {
            return Err(Error::numerical("kernel", "cannot normalize a zero-sum kernel"));
        }
        Kernel::new(self.rows, self.cols, self.data.iter().map(|v| v / s).collect())
    }

    /// Point-reflected kernel, `k'(a, b) = k(L-1-a, M-1-b)`.
    pub fn flipped(&self) -> Kernel {
        let mut data = self.data.clone();
        data.reverse();
        Kernel {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Mass outside the central element relative to the total absolute mass.
    pub fn off_center_mass(&self) -> f64 {
        let total: f64 = self.data.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        (total - self.center_value().abs()) / total
    }

    pub fn as_plane(&self) -> ImagePlane {
        ImagePlane::from_raw(self.cols, self.rows, self.data.clone())
    }

    pub fn from_plane(plane: &ImagePlane) -> Result<Kernel> {
        Kernel::new(plane.height(), plane.width(), plane.data().to_vec())
    }

    pub fn l1_distance(&self, other: &Kernel) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Restoration quality against a known reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    pub kernel_ncc: Option<f64>,
}

/// Mean of absolute values.
pub fn mean_abs(a: &ImagePlane) -> f64 {
    a.data().iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64
}

/// Mean of squared values.
pub fn mean_sq(a: &ImagePlane) -> f64 {
    a.data().iter().map(|v| v * v).sum::<f64>() / a.len() as f64
}

/// PSNR with unit peak. Identical inputs give `f64::INFINITY`.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::Dimensions(format!(
            "psnr needs equal shapes, got {}x{} and {}x{}",
            reference.height(),
            reference.width(),
            test.height(),
            test.width()
        )));
    }
    let mse = mean_sq(&reference.sub(test));
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// PSNR averaged over channels through the pooled mean squared error.
pub fn psnr_multi(reference: &MultiChannelImage, test: &MultiChannelImage) -> Result<f64> {
    if reference.channels().len() != test.channels().len() {
        return Err(Error::Dimensions("channel counts differ".into()));
    }
    let mut mse = 0.0;
    for (a, b) in reference.channels().iter().zip(test.channels()) {
        if !a.same_shape(b) {
            return Err(Error::Dimensions("channel shapes differ".into()));
        }
        mse += mean_sq(&a.sub(b));
    }
    mse /= reference.channels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Pearson correlation of two equally sized kernels (means removed).
pub fn kernel_ncc(a: &Kernel, b: &Kernel) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Dimensions("kernel shapes differ".into()));
    }
    let n = a.data().len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(if saa == sbb && a == b { 1.0 } else { 0.0 });
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn quality_report(
    reference: &ImagePlane,
    test: &ImagePlane,
    kernels: Option<(&Kernel, &Kernel)>,
) -> Result<QualityReport> {
    let p = psnr(reference, test)?;
    let d = reference.sub(test);
    let max_abs_diff = d.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kernel_ncc = match kernels {
        Some((est, truth)) => Some(kernel_ncc(est, truth)?),
        None => None,
    };
    Ok(QualityReport {
        psnr: p,
        mean_abs_diff: mean_abs(&d),
        max_abs_diff,
        kernel_ncc,
    })
}
