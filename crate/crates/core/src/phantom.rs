//! Synthetic OCT-like volumes with exact boundary truth.
//!
//! Each A-scan is rendered as a stack of layers, top to bottom: vitreous,
//! retina, a bright RPE band, a dark sub-RPE gap (only where a bump lifts the
//! RPE), and the choroid below the Bruch's membrane (BM). The BM itself is the
//! low-contrast step from the gap into the choroid; where no bump is present
//! the RPE rests directly on it. Layer boundaries are anti-aliased by pixel
//! coverage, so a boundary at row `t` renders its half-intensity crossing at
//! `t`.
//!
//! Rendering order is layers, speckle, additive noise, then shadows. Shadows
//! are a pure multiplicative attenuation map over whole column ranges.
//! Motion offsets move image and truth together.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BScanImage, Volume, VolumeGeometry};
use crate::surface::{SurfaceCurve, SurfaceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    /// Pixels.
    pub amplitude: f64,
    /// Lateral period in columns.
    pub period_x: f64,
    /// Period across B-scans, in B-scan indices; `None` for no variation.
    pub period_b: Option<f64>,
    pub phase: f64,
}

/// Drusen-like Gaussian elevation of the RPE above an unchanged BM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_b: f64,
    pub center_x: f64,
    /// Lateral standard deviation in pixels.
    pub width: f64,
    /// Peak elevation in pixels.
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shadow {
    pub bscan: usize,
    pub x_start: usize,
    /// Exclusive.
    pub x_end: usize,
    /// Multiplier in `(0, 1]`.
    pub attenuation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub additive_std: f64,
    /// Standard deviation of the per-pixel multiplicative factor around 1.
    pub speckle: f64,
}

/// Layer intensities and thicknesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub vitreous: f64,
    pub retina: f64,
    pub rpe: f64,
    pub sub_rpe: f64,
    /// Step from the sub-RPE level into the choroid at the BM.
    pub bm_contrast: f64,
    /// e-folding depth of the choroid brightness below the BM, pixels.
    pub choroid_decay: f64,
    pub rpe_thickness: f64,
    pub retina_thickness: f64,
}

impl Default for Appearance {
    fn default() -> Self {
        Appearance {
            vitreous: 0.02,
            retina: 0.35,
            rpe: 1.0,
            sub_rpe: 0.12,
            bm_contrast: 0.3,
            choroid_decay: 18.0,
            rpe_thickness: 4.0,
            retina_thickness: 14.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: VolumeGeometry,
    /// Mean BM row before sinusoids and motion.
    pub base_level: f64,
    pub base_components: Vec<SineComponent>,
    pub bumps: Vec<Bump>,
    pub noise: NoiseSpec,
    pub shadows: Vec<Shadow>,
    /// Per-B-scan vertical shift in pixels; empty means no motion.
    pub motion_offsets: Vec<f64>,
    #[serde(default)]
    pub appearance: Appearance,
    pub seed: u64,
}

impl PhantomSpec {
    /// Flat BM at `base_level`, no noise, no artifacts.
    pub fn flat(geometry: VolumeGeometry, base_level: f64, seed: u64) -> Self {
        PhantomSpec {
            geometry,
            base_level,
            base_components: Vec::new(),
            bumps: Vec::new(),
            noise: NoiseSpec {
                additive_std: 0.0,
                speckle: 0.0,
            },
            shadows: Vec::new(),
            motion_offsets: Vec::new(),
            appearance: Appearance::default(),
            seed,
        }
    }

    pub fn offset(&self, b: usize) -> f64 {
        self.motion_offsets.get(b).copied().unwrap_or(0.0)
    }

    /// Smooth BM surface without motion.
    pub fn base_surface(&self, b: usize, x: usize) -> f64 {
        let (bf, xf) = (b as f64, x as f64);
        self.base_level
            + self
                .base_components
                .iter()
                .map(|c| {
                    let along_b = c.period_b.map_or(0.0, |p| bf / p);
                    c.amplitude * (2.0 * PI * (xf / c.period_x + along_b) + c.phase).sin()
                })
                .sum::<f64>()
    }

    /// Exact BM row at `(b, x)`, motion included.
    pub fn truth(&self, b: usize, x: usize) -> f64 {
        self.base_surface(b, x) + self.offset(b)
    }

    /// RPE elevation above the BM at `(b, x)`.
    pub fn elevation(&self, b: usize, x: usize) -> f64 {
        let g = &self.geometry;
        let b_px = g.interslice_um / g.lateral_um_per_px;
        self.bumps
            .iter()
            .map(|bump| {
                let dx = (x as f64 - bump.center_x) / bump.width;
                let db = (b as f64 - bump.center_b) * b_px / bump.width;
                bump.height * (-0.5 * (dx * dx + db * db)).exp()
            })
            .sum()
    }

    /// Per-column attenuation of B-scan `b`.
    pub fn attenuation_row(&self, b: usize) -> Vec<f64> {
        let mut row = vec![1.0; self.geometry.width];
        for s in self.shadows.iter().filter(|s| s.bscan == b) {
            for a in &mut row[s.x_start..s.x_end.min(self.geometry.width)] {
                *a *= s.attenuation;
            }
        }
        row
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        g.validate()?;
        let (lo, hi) = (0.1 * g.height as f64, 0.9 * g.height as f64);
        for b in 0..g.n_bscans {
            for x in 0..g.width {
                let t = self.truth(b, x);
                if !(lo..=hi).contains(&t) {
                    return Err(Error::Validation(format!(
                        "surface {t:.2} at (b={b}, x={x}) leaves [{lo}, {hi}]"
                    )));
                }
            }
        }
        if !self.motion_offsets.is_empty() && self.motion_offsets.len() != g.n_bscans {
            return Err(Error::Validation(format!(
                "{} motion offsets for {} B-scans",
                self.motion_offsets.len(),
                g.n_bscans
            )));
        }
        for s in &self.shadows {
            if !(s.attenuation > 0.0 && s.attenuation <= 1.0) {
                return Err(Error::Validation(format!("attenuation {} outside (0, 1]", s.attenuation)));
            }
            if s.bscan >= g.n_bscans || s.x_start >= s.x_end || s.x_end > g.width {
                return Err(Error::Validation(format!("shadow {s:?} outside the volume")));
            }
        }
        for bump in &self.bumps {
            if !(bump.width > 0.0 && bump.height >= 0.0) {
                return Err(Error::Validation(format!("bump {bump:?} needs width > 0, height >= 0")));
            }
        }
        for c in &self.base_components {
            if !(c.period_x > 0.0 && c.period_b.is_none_or(|p| p > 0.0)) {
                return Err(Error::Validation(format!("component {c:?} needs positive periods")));
            }
        }
        if self.noise.additive_std < 0.0 || self.noise.speckle < 0.0 {
            return Err(Error::Validation("noise levels must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomManifest {
    pub spec: PhantomSpec,
    pub shadowed_columns: usize,
    pub shadow_fraction: f64,
    /// Population standard deviation of the motion offsets.
    pub offset_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default)]
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume,
    pub truth: SurfaceGrid,
    pub manifest: PhantomManifest,
}

/// Fraction of the pixel `[y - 0.5, y + 0.5]` lying below boundary `t`.
#[inline]
fn coverage(y: f64, t: f64) -> f64 {
    (y + 0.5 - t).clamp(0.0, 1.0)
}

/// Noise-free column profile.
fn render_column(a: &Appearance, height: usize, bm: f64, elevation: f64) -> Vec<f64> {
    let rpe_bottom = bm - elevation;
    let rpe_top = rpe_bottom - a.rpe_thickness;
    let ilm = rpe_top - a.retina_thickness;
    let choroid = a.sub_rpe + a.bm_contrast;
    (0..height)
        .map(|y| {
            let yf = y as f64;
            let depth = (yf - bm).max(0.0);
            let choroid_level = a.sub_rpe + (choroid - a.sub_rpe) * (-depth / a.choroid_decay).exp()
                + 0.1 * (1.0 - (-depth / a.choroid_decay).exp());
            a.vitreous
                + (a.retina - a.vitreous) * coverage(yf, ilm)
                + (a.rpe - a.retina) * coverage(yf, rpe_top)
                + (a.sub_rpe - a.rpe) * coverage(yf, rpe_bottom)
                + (choroid_level - a.sub_rpe) * coverage(yf, bm)
        })
        .collect()
}

/// Noise-free, shadow-free B-scan.
pub fn render_clean(spec: &PhantomSpec, b: usize) -> BScanImage {
    let g = &spec.geometry;
    let cols: Vec<Vec<f64>> = (0..g.width)
        .map(|x| render_column(&spec.appearance, g.height, spec.truth(b, x), spec.elevation(b, x)))
        .collect();
    BScanImage::from_fn(g.height, g.width, |r, c| cols[c][r])
}

fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Renders every B-scan of `spec` with its noise and artifacts, plus the
/// exact truth surface.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let g = spec.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bscans = Vec::with_capacity(g.n_bscans);
    let mut curves = Vec::with_capacity(g.n_bscans);
    let mut shadowed_columns = 0;
    for b in 0..g.n_bscans {
        let mut img = render_clean(spec, b);
        if spec.noise.speckle > 0.0 || spec.noise.additive_std > 0.0 {
            for v in img.pixels_mut() {
                let s: f64 = StandardNormal.sample(&mut rng);
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = *v * (1.0 + spec.noise.speckle * s).max(0.0) + spec.noise.additive_std * n;
            }
        }
        let att = spec.attenuation_row(b);
        shadowed_columns += att.iter().filter(|&&a| a < 1.0).count();
        for r in 0..g.height {
            for (c, a) in att.iter().enumerate() {
                let v = img.get(r, c) * a;
                img.set(r, c, v);
            }
        }
        bscans.push(img);
        curves.push(SurfaceCurve::from_fn(g.width, |x| spec.truth(b, x)));
    }
    let offsets: Vec<f64> = (0..g.n_bscans).map(|b| spec.offset(b)).collect();
    let manifest = PhantomManifest {
        spec: spec.clone(),
        shadowed_columns,
        shadow_fraction: shadowed_columns as f64 / (g.n_bscans * g.width) as f64,
        offset_std: population_std(&offsets),
        suite: None,
        index: 0,
    };
    Ok(Phantom {
        volume: Volume::new(g, bscans)?,
        truth: SurfaceGrid::new(g, curves)?,
        manifest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Clean,
    Noisy,
    Shadowed,
    Motion,
    Mixed,
}

impl Difficulty {
    pub const ALL: [Difficulty; 5] = [
        Difficulty::Clean,
        Difficulty::Noisy,
        Difficulty::Shadowed,
        Difficulty::Motion,
        Difficulty::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Clean => "clean",
            Difficulty::Noisy => "noisy",
            Difficulty::Shadowed => "shadowed",
            Difficulty::Motion => "motion",
            Difficulty::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown suite {s:?}")))
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pixel grid used for suite volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteShape {
    pub n_bscans: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for SuiteShape {
    fn default() -> Self {
        SuiteShape {
            n_bscans: 8,
            height: 64,
            width: 64,
        }
    }
}

/// Independent RNG stream per `(seed, volume index)`.
fn volume_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Clone, Copy)]
struct Artifacts {
    noise: (f64, f64),
    shadows: bool,
    motion: bool,
}

fn artifacts_for(difficulty: Difficulty, rng: &mut ChaCha8Rng) -> Artifacts {
    let mild = (0.02, 0.05);
    let moderate = (0.06, 0.15);
    let heavy = (0.12, 0.3);
    match difficulty {
        Difficulty::Clean => Artifacts { noise: mild, shadows: false, motion: false },
        Difficulty::Noisy => Artifacts { noise: heavy, shadows: false, motion: false },
        Difficulty::Shadowed => Artifacts { noise: moderate, shadows: true, motion: false },
        Difficulty::Motion => Artifacts { noise: moderate, shadows: false, motion: true },
        Difficulty::Mixed => Artifacts {
            noise: if rng.random_bool(0.5) { moderate } else { heavy },
            shadows: rng.random_bool(0.5),
            motion: rng.random_bool(0.5),
        },
    }
}

/// Draws a random spec for one suite volume.
pub fn suite_spec(difficulty: Difficulty, shape: SuiteShape, seed: u64, index: usize) -> PhantomSpec {
    let mut rng = volume_rng(seed, index);
    let (nb, h, w) = (shape.n_bscans, shape.height as f64, shape.width as f64);
    let geometry = VolumeGeometry::new(shape.n_bscans, shape.height, shape.width);
    let art = artifacts_for(difficulty, &mut rng);

    let base_components = (0..2)
        .map(|_| {
            let amplitude = rng.random_range(0.01..0.05) * h;
            let mut period_x = rng.random_range(0.8..2.5) * w;
            if art.motion {
                // whole periods across the grid: every row has mean base_level
                period_x = w / (w / period_x).ceil();
            }
            SineComponent {
                amplitude,
                period_x,
                period_b: Some(rng.random_range(3.0..8.0) * nb as f64),
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect::<Vec<_>>();
    let amp: f64 = base_components.iter().map(|c| c.amplitude).sum();

    let n_bumps = rng.random_range(0..=2);
    let bumps = (0..n_bumps)
        .map(|_| Bump {
            center_b: rng.random_range(0.0..nb as f64),
            center_x: rng.random_range(0.15..0.85) * w,
            width: rng.random_range(0.04..0.1) * w,
            height: rng.random_range(0.04..0.12) * h,
        })
        .collect();

    let mut shadows = Vec::new();
    if art.shadows {
        let min_cols = (0.05 * w).ceil() as usize + 1;
        for b in 0..nb {
            let mut covered = 0;
            while covered < min_cols {
                let len = rng.random_range(min_cols..=2 * min_cols).min(shape.width);
                let start = rng.random_range(0..=shape.width - len);
                shadows.push(Shadow {
                    bscan: b,
                    x_start: start,
                    x_end: start + len,
                    attenuation: rng.random_range(0.15..0.4),
                });
                covered += len;
            }
        }
    }

    let mut motion_offsets = Vec::new();
    if art.motion && nb > 1 {
        let raw: Vec<f64> = (0..nb).map(|_| rng.sample::<f64, _>(StandardNormal) * 4.0).collect();
        let m = raw.iter().sum::<f64>() / nb as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - m).collect();
        let s = population_std(&centered);
        // rescale so the injected motion always has std >= 3 px
        let target = 3.5f64.max(s).min(0.08 * h);
        let k = if s > 0.0 { target / s } else { 0.0 };
        motion_offsets = centered.iter().map(|v| v * k).collect();
    }
    let max_off = motion_offsets.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    // keep the BM inside the central band and leave room for the retina above
    let top_room = Appearance::default().rpe_thickness + Appearance::default().retina_thickness;
    let lo = (0.1 * h).max(top_room + 0.12 * h) + amp + max_off;
    let hi = 0.9 * h - amp - max_off - 2.0;
    let base_level = if lo < hi { rng.random_range(lo..hi) } else { 0.5 * (lo + hi) };

    PhantomSpec {
        geometry,
        base_level,
        base_components,
        bumps,
        noise: NoiseSpec {
            additive_std: art.noise.0,
            speckle: art.noise.1,
        },
        shadows,
        motion_offsets,
        appearance: Appearance::default(),
        seed: rng.random(),
    }
}

/// A reproducible named suite of `count` phantom volumes.
pub fn make_suite(
    difficulty: Difficulty,
    count: usize,
    seed: u64,
    shape: SuiteShape,
) -> Result<Vec<Phantom>> {
    if count == 0 {
        return Err(Error::Validation("suite count must be >= 1".into()));
    }
    (0..count)
        .map(|i| {
            let mut ph = generate(&suite_spec(difficulty, shape, seed, i))?;
            ph.manifest.suite = Some(difficulty.name().into());
            ph.manifest.index = i;
            Ok(ph)
        })
        .collect()
}
