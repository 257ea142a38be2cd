//! Boundary positions per A-scan, for one B-scan or a whole volume.
//!
//! Invalid (undefined) positions are stored as NaN. The validity mask is
//! always derived from the values and never stored next to them.

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;

/// Row coordinate of the boundary in each column of one B-scan.
///
/// Equality treats two invalid entries as equal and compares valid ones exactly.
#[derive(Debug, Clone)]
pub struct SurfaceCurve {
    positions: Vec<f64>,
}

impl PartialEq for SurfaceCurve {
    fn eq(&self, other: &Self) -> bool {
        self.positions.len() == other.positions.len()
            && self
                .positions
                .iter()
                .zip(&other.positions)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl SurfaceCurve {
    /// Wraps raw positions. Non-finite entries are normalized to NaN.
    pub fn new(mut positions: Vec<f64>) -> Self {
        for p in &mut positions {
            if !p.is_finite() {
                *p = f64::NAN;
            }
        }
        SurfaceCurve { positions }
    }

    pub fn from_fn(width: usize, f: impl FnMut(usize) -> f64) -> Self {
        SurfaceCurve::new((0..width).map(f).collect())
    }

    pub fn invalid(width: usize) -> Self {
        SurfaceCurve {
            positions: vec![f64::NAN; width],
        }
    }

    pub fn width(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    #[inline]
    pub fn is_valid(&self, x: usize) -> bool {
        !self.positions[x].is_nan()
    }

    #[inline]
    pub fn get(&self, x: usize) -> Option<f64> {
        let v = self.positions[x];
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, x: usize, value: f64) {
        self.positions[x] = if value.is_finite() { value } else { f64::NAN };
    }

    pub fn invalidate(&mut self, x: usize) {
        self.positions[x] = f64::NAN;
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.positions.iter().map(|p| !p.is_nan()).collect()
    }

    pub fn n_valid(&self) -> usize {
        self.positions.iter().filter(|p| !p.is_nan()).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        1.0 - self.n_valid() as f64 / self.positions.len() as f64
    }

    /// Iterates `(column, position)` over valid entries only.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_nan())
            .map(|(x, &p)| (x, p))
    }

    /// Mean over valid columns; `None` when nothing is valid.
    pub fn mean(&self) -> Option<f64> {
        let (sum, n) = self
            .iter_valid()
            .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Checks that every valid position lies in `[0, height - 1]`.
    pub fn validate(&self, height: usize) -> Result<()> {
        let hi = height.saturating_sub(1) as f64;
        match self.iter_valid().find(|&(_, p)| p < 0.0 || p > hi) {
            Some((x, p)) => Err(Error::Domain(format!(
                "position {p} at column {x} outside [0, {hi}]"
            ))),
            None => Ok(()),
        }
    }

    pub fn map_valid(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        SurfaceCurve::new(
            self.positions
                .iter()
                .enumerate()
                .map(|(x, &p)| if p.is_nan() { p } else { f(x, p) })
                .collect(),
        )
    }

    /// Left-right mirror.
    pub fn flipped(&self) -> Self {
        SurfaceCurve {
            positions: self.positions.iter().rev().copied().collect(),
        }
    }
}

/// Boundary positions for every B-scan of a volume, `B x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    geometry: VolumeGeometry,
    curves: Vec<SurfaceCurve>,
}

impl SurfaceGrid {
    pub fn new(geometry: VolumeGeometry, curves: Vec<SurfaceCurve>) -> Result<Self> {
        if curves.len() != geometry.n_bscans {
            return Err(Error::Shape(format!(
                "geometry declares {} B-scans, got {} curves",
                geometry.n_bscans,
                curves.len()
            )));
        }
        if let Some(c) = curves.iter().find(|c| c.width() != geometry.width) {
            return Err(Error::Shape(format!(
                "curve width {} does not match geometry width {}",
                c.width(),
                geometry.width
            )));
        }
        Ok(SurfaceGrid { geometry, curves })
    }

    /// Builds a grid from a flat `[B, W]` buffer, NaN marking invalid entries.
    pub fn from_flat(geometry: VolumeGeometry, values: &[f64]) -> Result<Self> {
        if values.len() != geometry.n_bscans * geometry.width {
            return Err(Error::Shape(format!(
                "{} values do not fill a {}x{} surface",
                values.len(),
                geometry.n_bscans,
                geometry.width
            )));
        }
        let curves = values
            .chunks(geometry.width)
            .map(|c| SurfaceCurve::new(c.to_vec()))
            .collect();
        SurfaceGrid::new(geometry, curves)
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn n_bscans(&self) -> usize {
        self.curves.len()
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn curves(&self) -> &[SurfaceCurve] {
        &self.curves
    }

    pub fn curve(&self, b: usize) -> &SurfaceCurve {
        &self.curves[b]
    }

    pub fn curve_mut(&mut self, b: usize) -> &mut SurfaceCurve {
        &mut self.curves[b]
    }

    pub fn get(&self, b: usize, x: usize) -> Option<f64> {
        self.curves[b].get(x)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.curves.iter().flat_map(|c| c.positions().iter().copied()).collect()
    }

    pub fn n_valid(&self) -> usize {
        self.curves.iter().map(SurfaceCurve::n_valid).sum()
    }

    /// Adds `k` to every valid position.
    pub fn shifted(&self, k: f64) -> Self {
        SurfaceGrid {
            geometry: self.geometry,
            curves: self.curves.iter().map(|c| c.map_valid(|_, p| p + k)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.curves
            .iter()
            .try_for_each(|c| c.validate(self.geometry.height))
    }
}

/// Per-A-scan standard deviation of the predicted column distribution, `B x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyGrid {
    n_bscans: usize,
    width: usize,
    sigma: Vec<f64>,
}

impl UncertaintyGrid {
    pub fn new(n_bscans: usize, width: usize, mut sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != n_bscans * width {
            return Err(Error::Shape(format!(
                "{} values do not fill a {n_bscans}x{width} uncertainty grid",
                sigma.len()
            )));
        }
        for s in &mut sigma {
            if !s.is_finite() {
                *s = f64::NAN;
            } else if *s < 0.0 {
                return Err(Error::Domain(format!("negative standard deviation {s}")));
            }
        }
        Ok(UncertaintyGrid {
            n_bscans,
            width,
            sigma,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("ragged uncertainty rows".into()));
        }
        UncertaintyGrid::new(rows.len(), width, rows.concat())
    }

    /// Same value at every A-scan.
    pub fn constant(n_bscans: usize, width: usize, value: f64) -> Self {
        UncertaintyGrid {
            n_bscans,
            width,
            sigma: vec![value; n_bscans * width],
        }
    }

    pub fn n_bscans(&self) -> usize {
        self.n_bscans
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.sigma
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.sigma[b * self.width..(b + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, b: usize, x: usize) -> Option<f64> {
        let v = self.sigma[b * self.width + x];
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, b: usize, x: usize, value: f64) {
        self.sigma[b * self.width + x] = value;
    }

    pub fn matches(&self, grid: &SurfaceGrid) -> bool {
        self.n_bscans == grid.n_bscans() && self.width == grid.width()
    }
}
