//! Volume geometry and the image containers built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size and physical spacing of an OCT volume.
///
/// `height` is the number of rows per B-scan (axial samples) and `width` the
/// number of A-scans per B-scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub n_bscans: usize,
    pub height: usize,
    pub width: usize,
    pub axial_um_per_px: f64,
    pub lateral_um_per_px: f64,
    pub interslice_um: f64,
}

impl VolumeGeometry {
    /// Geometry with Spectralis-like spacings (3.87 µm axial).
    pub fn new(n_bscans: usize, height: usize, width: usize) -> Self {
        VolumeGeometry {
            n_bscans,
            height,
            width,
            axial_um_per_px: 3.87,
            lateral_um_per_px: 11.0,
            interslice_um: 120.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bscans == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Validation(format!(
                "volume dimensions must be >= 1, got {}x{}x{}",
                self.n_bscans, self.height, self.width
            )));
        }
        for (name, v) in [
            ("axial_um_per_px", self.axial_um_per_px),
            ("lateral_um_per_px", self.lateral_um_per_px),
            ("interslice_um", self.interslice_um),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Same spacings, different pixel grid.
    pub fn with_dims(&self, n_bscans: usize, height: usize, width: usize) -> Self {
        VolumeGeometry {
            n_bscans,
            height,
            width,
            ..*self
        }
    }
}

/// A single B-scan, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct BScanImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
}

impl BScanImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "image of {rows}x{cols} cannot hold {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("image pixels must be finite".into()));
        }
        Ok(BScanImage { rows, cols, pixels })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        BScanImage {
            rows,
            cols,
            pixels: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pixels.push(f(r, c));
            }
        }
        BScanImage { rows, cols, pixels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.pixels[r * self.cols + c] = v;
    }

    /// Bilinear sample at fractional `(row, col)`; outside the image returns `fill`.
    pub fn sample_or(&self, row: f64, col: f64, fill: f64) -> f64 {
        let max_r = (self.rows - 1) as f64;
        let max_c = (self.cols - 1) as f64;
        if !(row >= 0.0 && row <= max_r && col >= 0.0 && col <= max_c) {
            return fill;
        }
        let r0 = (row.floor() as usize).min(self.rows - 1);
        let c0 = (col.floor() as usize).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let fr = row - r0 as f64;
        let fc = col - c0 as f64;
        let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    }

    /// Left-right mirror.
    pub fn flipped(&self) -> Self {
        BScanImage::from_fn(self.rows, self.cols, |r, c| self.get(r, self.cols - 1 - c))
    }
}

/// A stack of B-scans sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: VolumeGeometry,
    bscans: Vec<BScanImage>,
}

impl Volume {
    pub fn new(geometry: VolumeGeometry, bscans: Vec<BScanImage>) -> Result<Self> {
        geometry.validate()?;
        if bscans.len() != geometry.n_bscans {
            return Err(Error::Shape(format!(
                "geometry declares {} B-scans, got {}",
                geometry.n_bscans,
                bscans.len()
            )));
        }
        for b in &bscans {
            if b.rows() != geometry.height || b.cols() != geometry.width {
                return Err(Error::Shape(format!(
                    "B-scan is {}x{}, geometry expects {}x{}",
                    b.rows(),
                    b.cols(),
                    geometry.height,
                    geometry.width
                )));
            }
        }
        Ok(Volume { geometry, bscans })
    }

    /// Builds a volume from a flat `[B, H, W]` buffer.
    pub fn from_flat(geometry: VolumeGeometry, values: &[f64]) -> Result<Self> {
        let plane = geometry.height * geometry.width;
        if values.len() != geometry.n_bscans * plane {
            return Err(Error::Shape(format!(
                "{} values do not fill a {}x{}x{} volume",
                values.len(),
                geometry.n_bscans,
                geometry.height,
                geometry.width
            )));
        }
        let bscans = values
            .chunks(plane)
            .map(|c| BScanImage::new(geometry.height, geometry.width, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Volume::new(geometry, bscans)
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn bscans(&self) -> &[BScanImage] {
        &self.bscans
    }

    pub fn bscan(&self, b: usize) -> &BScanImage {
        &self.bscans[b]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.bscans.iter().flat_map(|b| b.pixels().iter().copied()).collect()
    }
}
