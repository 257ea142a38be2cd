//! Input preparation: resizing, per-B-scan z-normalization, and exclusion of
//! B-scans whose reference boundary is mostly undefined.
//!
//! Resizing happens first, normalization second. Resampling is bilinear with
//! pixel centers at integer coordinates and the corner pixels of source and
//! target aligned, so target pixel `(r, c)` samples the source at
//! `(r * (H_in - 1) / (H_out - 1), c * (W_in - 1) / (W_out - 1))`. Samples are
//! clamped to the source edges.

use crate::error::{Error, Result};
use crate::geometry::BScanImage;
use crate::surface::SurfaceGrid;

/// Default exclusion threshold: B-scans with more than 20% undefined A-scans are dropped.
pub const DEFAULT_MAX_UNDEFINED_FRAC: f64 = 0.20;

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub image: BScanImage,
    /// Set when the resized image had no intensity variance and was zeroed.
    pub zero_variance: bool,
}

/// Corner-aligned source coordinate of target index `i`.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        return 0.0;
    }
    i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
}

pub fn resize_bilinear(img: &BScanImage, rows: usize, cols: usize) -> Result<BScanImage> {
    if rows < 2 || cols < 2 {
        return Err(Error::Validation(format!(
            "resize target must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if rows == img.rows() && cols == img.cols() {
        return Ok(img.clone());
    }
    let max_r = (img.rows() - 1) as f64;
    let max_c = (img.cols() - 1) as f64;
    Ok(BScanImage::from_fn(rows, cols, |r, c| {
        let sr = source_coord(r, img.rows(), rows).clamp(0.0, max_r);
        let sc = source_coord(c, img.cols(), cols).clamp(0.0, max_c);
        img.sample_or(sr, sc, 0.0)
    }))
}

/// Zero mean, unit population standard deviation.
pub fn z_normalize(img: &BScanImage) -> Preprocessed {
    let n = img.pixels().len() as f64;
    let mean = img.pixels().iter().sum::<f64>() / n;
    let var = img.pixels().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Preprocessed {
            image: BScanImage::zeros(img.rows(), img.cols()),
            zero_variance: true,
        };
    }
    let mut out = img.clone();
    for v in out.pixels_mut() {
        *v = (*v - mean) / std;
    }
    Preprocessed {
        image: out,
        zero_variance: false,
    }
}

pub fn preprocess_bscan(img: &BScanImage, target: (usize, usize)) -> Result<Preprocessed> {
    let resized = resize_bilinear(img, target.0, target.1)?;
    Ok(z_normalize(&resized))
}

/// Indices of B-scans whose undefined fraction is at most `max_undefined_frac`.
pub fn exclude_bscans(grid: &SurfaceGrid, max_undefined_frac: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&max_undefined_frac) {
        return Err(Error::Validation(format!(
            "max_undefined_frac must be in [0, 1], got {max_undefined_frac}"
        )));
    }
    Ok(grid
        .curves()
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let invalid = c.width() - c.n_valid();
            // integer comparison keeps the 20% boundary exact
            (invalid as f64) <= max_undefined_frac * c.width() as f64 + 1e-9
        })
        .map(|(b, _)| b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VolumeGeometry;
    use crate::surface::SurfaceCurve;

    fn stats(img: &BScanImage) -> (f64, f64) {
        let n = img.pixels().len() as f64;
        let m = img.pixels().iter().sum::<f64>() / n;
        let v = img.pixels().iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn constant_image_zeroes_with_flag() {
        let img = BScanImage::from_fn(5, 7, |_, _| 3.25);
        let out = preprocess_bscan(&img, (5, 7)).unwrap();
        assert!(out.zero_variance);
        assert!(out.image.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_standardized() {
        let img = BScanImage::from_fn(9, 13, |r, c| ((r * 7 + c * 3) % 11) as f64 + 0.1 * c as f64);
        let out = preprocess_bscan(&img, (16, 20)).unwrap();
        assert!(!out.zero_variance);
        assert_eq!((out.image.rows(), out.image.cols()), (16, 20));
        let (m, s) = stats(&out.image);
        assert!(m.abs() < 1e-6);
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ramp_upsampling_matches_direct_bilinear() {
        // Bilinear resampling reproduces a bilinear function exactly; with corner
        // alignment target (r, c) maps to source (3r/7, 3c/7).
        let img = BScanImage::from_fn(4, 4, |r, c| 4.0 * r as f64 + c as f64 + 0.5 * (r * c) as f64);
        let out = resize_bilinear(&img, 8, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let (y, x) = (3.0 * r as f64 / 7.0, 3.0 * c as f64 / 7.0);
                let expect = 4.0 * y + x + 0.5 * y * x;
                assert!((out.get(r, c) - expect).abs() < 1e-12, "({r},{c})");
            }
        }
        assert_eq!(out.get(0, 0), img.get(0, 0));
        assert_eq!(out.get(7, 7), img.get(3, 3));
    }

    #[test]
    fn renormalizing_is_idempotent() {
        let img = BScanImage::from_fn(12, 10, |r, c| (r as f64 * 0.7).sin() + c as f64 * 0.05);
        let once = preprocess_bscan(&img, (12, 10)).unwrap().image;
        let twice = preprocess_bscan(&once, (12, 10)).unwrap().image;
        for (a, b) in once.pixels().iter().zip(twice.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_targets_rejected() {
        let img = BScanImage::zeros(4, 4);
        assert!(preprocess_bscan(&img, (1, 4)).is_err());
    }

    fn grid_with_invalid(counts: &[usize], width: usize) -> SurfaceGrid {
        let g = VolumeGeometry::new(counts.len(), 32, width);
        let curves = counts
            .iter()
            .map(|&k| SurfaceCurve::from_fn(width, |x| if x < k { f64::NAN } else { 10.0 }))
            .collect();
        SurfaceGrid::new(g, curves).unwrap()
    }

    #[test]
    fn exclusion_boundary_is_inclusive() {
        // 0%, 30%, exactly 20% invalid
        let grid = grid_with_invalid(&[0, 3, 2], 10);
        assert_eq!(exclude_bscans(&grid, DEFAULT_MAX_UNDEFINED_FRAC).unwrap(), vec![0, 2]);
        assert!(exclude_bscans(&grid, 1.5).is_err());
    }
}
