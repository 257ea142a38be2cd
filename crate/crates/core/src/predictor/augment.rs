//! Training-time augmentations applied jointly to an image and its reference
//! curve: horizontal flip, rotation, sinusoidal axial warp, and vertical
//! shift. Each fires independently with the configured probability.
//!
//! Image resampling is bilinear with edge clamping. Curve columns that the
//! transform moves outside the image, or that no transformed segment covers,
//! become undefined.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BScanImage;
use crate::surface::SurfaceCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub probability: f64,
    pub max_rotation_deg: f64,
    /// Largest sine-warp amplitude, pixels.
    pub max_sine_amplitude: f64,
    /// Largest vertical shift as a fraction of the image height.
    pub max_shift_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            probability: 0.3,
            max_rotation_deg: 20.0,
            max_sine_amplitude: 8.0,
            max_shift_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineWarp {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl SineWarp {
    #[inline]
    pub fn displacement(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * PI * x / self.period + self.phase).sin()
    }
}

/// Concrete augmentation parameters; `None` means the step does not fire.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub flip: bool,
    pub rotation_deg: Option<f64>,
    pub sine: Option<SineWarp>,
    pub shift: Option<f64>,
}

impl AugmentPlan {
    pub fn is_identity(&self) -> bool {
        !self.flip && self.rotation_deg.is_none() && self.sine.is_none() && self.shift.is_none()
    }
}

/// Draws a plan. The number of RNG draws does not depend on which steps fire.
pub fn sample_plan<R: Rng>(cfg: &AugmentConfig, rows: usize, cols: usize, rng: &mut R) -> AugmentPlan {
    let p = cfg.probability;
    let fire: [bool; 4] = std::array::from_fn(|_| rng.random::<f64>() < p);
    let angle = rng.random_range(-1.0..=1.0) * cfg.max_rotation_deg;
    let amplitude = rng.random_range(-1.0..=1.0) * cfg.max_sine_amplitude;
    let period = rng.random_range(0.25..=1.0) * cols as f64;
    let phase = rng.random_range(0.0..2.0 * PI);
    let shift = rng.random_range(-1.0..=1.0) * cfg.max_shift_frac * rows as f64;
    AugmentPlan {
        flip: fire[0],
        rotation_deg: fire[1].then_some(angle),
        sine: fire[2].then_some(SineWarp {
            amplitude,
            period,
            phase,
        }),
        shift: fire[3].then_some(shift),
    }
}

pub fn augment<R: Rng>(
    img: &BScanImage,
    reference: &SurfaceCurve,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (BScanImage, SurfaceCurve) {
    let plan = sample_plan(cfg, img.rows(), img.cols(), rng);
    apply_plan(img, reference, &plan)
}

pub fn apply_plan(img: &BScanImage, reference: &SurfaceCurve, plan: &AugmentPlan) -> (BScanImage, SurfaceCurve) {
    let mut img = img.clone();
    let mut curve = reference.clone();
    if plan.flip {
        img = img.flipped();
        curve = curve.flipped();
    }
    if let Some(deg) = plan.rotation_deg {
        (img, curve) = rotate(&img, &curve, deg);
    }
    if let Some(w) = plan.sine {
        (img, curve) = column_shift(&img, &curve, |x| w.displacement(x));
    }
    if let Some(s) = plan.shift {
        (img, curve) = column_shift(&img, &curve, |_| s);
    }
    (img, curve)
}

fn clamp_sample(img: &BScanImage, row: f64, col: f64) -> f64 {
    let r = row.clamp(0.0, (img.rows() - 1) as f64);
    let c = col.clamp(0.0, (img.cols() - 1) as f64);
    img.sample_or(r, c, 0.0)
}

/// Moves column `x` down by `d(x)` pixels.
fn column_shift(img: &BScanImage, curve: &SurfaceCurve, d: impl Fn(f64) -> f64) -> (BScanImage, SurfaceCurve) {
    let hi = (img.rows() - 1) as f64;
    let disp: Vec<f64> = (0..img.cols()).map(|x| d(x as f64)).collect();
    let out = BScanImage::from_fn(img.rows(), img.cols(), |r, c| clamp_sample(img, r as f64 - disp[c], c as f64));
    let moved = SurfaceCurve::from_fn(curve.width(), |x| match curve.get(x) {
        Some(p) if (0.0..=hi).contains(&(p + disp[x])) => p + disp[x],
        _ => f64::NAN,
    });
    (out, moved)
}

/// Rotates by `deg` degrees about the image center, in (column, row) coordinates.
fn rotate(img: &BScanImage, curve: &SurfaceCurve, deg: f64) -> (BScanImage, SurfaceCurve) {
    let (h, w) = (img.rows(), img.cols());
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let (s, c) = deg.to_radians().sin_cos();
    let out = BScanImage::from_fn(h, w, |r, col| {
        let (dx, dy) = (col as f64 - cx, r as f64 - cy);
        // inverse rotation
        let sx = cx + c * dx + s * dy;
        let sy = cy - s * dx + c * dy;
        clamp_sample(img, sy, sx)
    });

    let forward = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
    };
    let pts: Vec<Option<(f64, f64)>> = (0..curve.width())
        .map(|x| curve.get(x).map(|y| forward(x as f64, y)))
        .collect();
    let hi = (h - 1) as f64;
    let moved = SurfaceCurve::from_fn(w, |col| {
        let xc = col as f64;
        for seg in pts.windows(2) {
            if let (Some(a), Some(b)) = (seg[0], seg[1]) {
                let (lo, up) = if a.0 <= b.0 { (a, b) } else { (b, a) };
                if xc >= lo.0 && xc <= up.0 {
                    let t = if up.0 > lo.0 { (xc - lo.0) / (up.0 - lo.0) } else { 0.0 };
                    let y = lo.1 + t * (up.1 - lo.1);
                    return if (0.0..=hi).contains(&y) { y } else { f64::NAN };
                }
            }
        }
        f64::NAN
    });
    (out, moved)
}
