//! Uncertainty-gated post-processing of a predicted surface.
//!
//! 1. Per-B-scan axial offsets `δ_j = mean(μ̂_j) - R`.
//! 2. Control points drawn from the low-uncertainty A-scans.
//! 3. A smoothing thin-plate spline through the aligned control values.
//! 4. A-scans with `σ̂ > τ`, or with no prediction, take the spline value
//!    shifted back by `δ_j`; every other position is left untouched.
//!
//! The spline is fitted on `μ̂ - mean(μ̂_j)`, i.e. on the aligned values with
//! `R` subtracted, which gives the same surface because the spline
//! reproduces constants.

pub mod tps;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{SurfaceGrid, UncertaintyGrid};
pub use tps::{tps_eval, tps_fit, ControlPoint, TpsModel, TpsSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocConfig {
    /// Alignment row; half the image height when unset.
    pub reference: Option<f64>,
    pub n_control: usize,
    /// Rigidity added to the kernel diagonal.
    pub lambda: f64,
    /// A-scans with `σ̂ > tau` are replaced.
    pub tau: f64,
    /// Control points come from A-scans below this quantile of `σ̂`.
    pub pool_percentile: f64,
    pub seed: u64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig {
            reference: None,
            n_control: 1024,
            lambda: 0.05,
            tau: 1.0,
            pool_percentile: 0.6,
            seed: 0,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_control < 3 {
            return Err(Error::Validation(format!("n_control must be >= 3, got {}", self.n_control)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!("rigidity must be >= 0, got {}", self.lambda)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Validation(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.pool_percentile > 0.0 && self.pool_percentile <= 1.0) {
            return Err(Error::Validation(format!(
                "pool percentile must be in (0, 1], got {}",
                self.pool_percentile
            )));
        }
        if self.reference.is_some_and(|r| !r.is_finite()) {
            return Err(Error::Validation("reference row must be finite".into()));
        }
        Ok(())
    }

    pub fn reference_for(&self, height: usize) -> f64 {
        self.reference.unwrap_or(height as f64 / 2.0)
    }
}

/// `δ_j` per B-scan; `None` for B-scans without any valid position.
pub fn align_offsets(grid: &SurfaceGrid, reference: f64) -> Vec<Option<f64>> {
    grid.curves().iter().map(|c| c.mean().map(|m| m - reference)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSelection {
    /// `(b, x)` in row-major order.
    pub points: Vec<(usize, usize)>,
    pub pool_size: usize,
    /// The `σ̂` quantile the pool was cut at.
    pub threshold: f64,
    pub widened: bool,
    pub warnings: Vec<String>,
}

fn usable(grid: &SurfaceGrid, unc: &UncertaintyGrid) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for b in 0..grid.n_bscans() {
        for x in 0..grid.width() {
            if let (Some(_), Some(s)) = (grid.get(b, x), unc.get(b, x)) {
                out.push((b, x, s));
            }
        }
    }
    out
}

/// Picks up to `n_control` A-scans from the low-uncertainty pool.
///
/// The pool holds A-scans with `σ̂` strictly below `q`, the `pool_percentile`
/// quantile of all usable `σ̂` (or at most `q` when ties leave the strict pool
/// empty). A pool smaller than `n_control` is widened to `σ̂ <= q` and then to
/// `σ̂ <= tau`; whatever it holds after that is used in full.
pub fn select_control_points(
    grid: &SurfaceGrid,
    unc: &UncertaintyGrid,
    cfg: &PostprocConfig,
) -> Result<ControlSelection> {
    cfg.validate()?;
    if !unc.matches(grid) {
        return Err(Error::Shape("uncertainty grid does not match the surface".into()));
    }
    let cands = usable(grid, unc);
    let mut warnings = Vec::new();
    if cands.is_empty() {
        return Ok(ControlSelection {
            points: Vec::new(),
            pool_size: 0,
            threshold: f64::NAN,
            widened: false,
            warnings: vec!["no A-scan has both a position and an uncertainty".into()],
        });
    }
    let mut sigmas: Vec<f64> = cands.iter().map(|c| c.2).collect();
    sigmas.sort_by(f64::total_cmp);
    let k = ((cfg.pool_percentile * sigmas.len() as f64).ceil() as usize).clamp(1, sigmas.len());
    let q = sigmas[k - 1];

    let mut pool: Vec<(usize, usize)> = cands.iter().filter(|c| c.2 < q).map(|c| (c.0, c.1)).collect();
    let mut widened = false;
    if pool.is_empty() || pool.len() < cfg.n_control {
        let wider: Vec<(usize, usize)> =
            cands.iter().filter(|c| c.2 <= q.max(cfg.tau)).map(|c| (c.0, c.1)).collect();
        if wider.len() > pool.len() {
            if !pool.is_empty() {
                warnings.push(format!(
                    "pool of {} below n_control {}; widened to {} A-scans with sigma <= {}",
                    pool.len(),
                    cfg.n_control,
                    wider.len(),
                    q.max(cfg.tau)
                ));
                widened = true;
            }
            pool = wider;
        }
    }
    let pool_size = pool.len();
    let points = if pool.len() > cfg.n_control {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), cfg.n_control).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pool[i]).collect()
    } else {
        if pool.len() < cfg.n_control {
            warnings.push(format!("using all {} pool A-scans (n_control {})", pool.len(), cfg.n_control));
        }
        pool
    };
    Ok(ControlSelection {
        points,
        pool_size,
        threshold: q,
        widened,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocReport {
    pub reference: f64,
    pub offsets: Vec<Option<f64>>,
    pub excluded_bscans: Vec<usize>,
    pub control_points: Vec<(usize, usize)>,
    pub pool_size: usize,
    pub pool_threshold: f64,
    pub pool_widened: bool,
    pub replaced: usize,
    /// `None` when post-processing was skipped.
    pub solver: Option<TpsSolver>,
    pub side_conditions: Option<[f64; 3]>,
    pub control_residual: Option<f64>,
    pub skipped: bool,
    pub diagnostics: Vec<String>,
    pub config: PostprocConfig,
}

#[inline]
fn coords(b: usize, x: usize, n_b: usize, w: usize) -> (f64, f64) {
    let u = if n_b > 1 { b as f64 / (n_b - 1) as f64 } else { 0.0 };
    let v = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.0 };
    (u, v)
}

/// Replaces uncertain or missing positions with the spline surface.
pub fn apply_postprocess(
    grid: &SurfaceGrid,
    unc: &UncertaintyGrid,
    cfg: &PostprocConfig,
) -> Result<(SurfaceGrid, PostprocReport)> {
    cfg.validate()?;
    if !unc.matches(grid) {
        return Err(Error::Shape("uncertainty grid does not match the surface".into()));
    }
    let (n_b, w) = (grid.n_bscans(), grid.width());
    let reference = cfg.reference_for(grid.geometry().height);
    let means: Vec<Option<f64>> = grid.curves().iter().map(|c| c.mean()).collect();
    let offsets = align_offsets(grid, reference);
    let excluded: Vec<usize> = (0..n_b).filter(|&b| means[b].is_none()).collect();
    let mut diagnostics: Vec<String> = excluded
        .iter()
        .map(|b| format!("B-scan {b} has no valid position; excluded"))
        .collect();

    let selection = select_control_points(grid, unc, cfg)?;
    diagnostics.extend(selection.warnings.iter().cloned());
    let mut report = PostprocReport {
        reference,
        offsets,
        excluded_bscans: excluded,
        control_points: selection.points.clone(),
        pool_size: selection.pool_size,
        pool_threshold: selection.threshold,
        pool_widened: selection.widened,
        replaced: 0,
        solver: None,
        side_conditions: None,
        control_residual: None,
        skipped: false,
        diagnostics,
        config: *cfg,
    };

    let skip = |mut report: PostprocReport, why: String| {
        report.skipped = true;
        report.diagnostics.push(format!("post-processing skipped: {why}"));
        Ok((grid.clone(), report))
    };
    if selection.points.len() < 3 {
        let n = selection.points.len();
        return skip(report, format!("{n} usable control points, need at least 3"));
    }

    let points: Vec<ControlPoint> = selection
        .points
        .iter()
        .map(|&(b, x)| {
            let (u, v) = coords(b, x, n_b, w);
            let mu = grid.get(b, x).expect("control points are valid");
            ControlPoint {
                u,
                v,
                value: mu - means[b].expect("control B-scans have a mean"),
            }
        })
        .collect();
    let model = match tps_fit(&points, cfg.lambda) {
        Ok(m) => m,
        Err(e) => return skip(report, e.to_string()),
    };
    if model.solver == TpsSolver::AffineFallback {
        report.diagnostics.push("kernel system singular; used least-squares plane".into());
    }
    report.solver = Some(model.solver);
    report.side_conditions = Some(model.side_conditions());
    report.control_residual = Some(model.max_residual());

    let mut targets = Vec::new();
    for b in 0..n_b {
        if means[b].is_none() {
            continue;
        }
        for x in 0..w {
            let keep = grid.get(b, x).is_some() && unc.get(b, x).is_some_and(|s| s <= cfg.tau);
            if !keep {
                targets.push((b, x));
            }
        }
    }
    let queries: Vec<(f64, f64)> = targets.iter().map(|&(b, x)| coords(b, x, n_b, w)).collect();
    let values = tps_eval(&model, &queries);
    let mut out = grid.clone();
    for (&(b, x), t) in targets.iter().zip(values) {
        out.curve_mut(b).set(x, t + means[b].expect("non-excluded B-scan"));
    }
    report.replaced = targets.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VolumeGeometry;
    use crate::surface::SurfaceCurve;

    fn grid_from(n_b: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> SurfaceGrid {
        let g = VolumeGeometry::new(n_b, 64, w);
        SurfaceGrid::new(g, (0..n_b).map(|b| SurfaceCurve::from_fn(w, |x| f(b, x))).collect()).unwrap()
    }

    #[test]
    fn offsets_examples() {
        let g = VolumeGeometry::new(3, 512, 8);
        let grid = SurfaceGrid::new(g, vec![SurfaceCurve::from_fn(8, |_| 300.0); 3]).unwrap();
        assert_eq!(align_offsets(&grid, 256.0), vec![Some(44.0); 3]);
        assert_eq!(align_offsets(&grid, 300.0), vec![Some(0.0); 3]);
        let mut grid = grid;
        *grid.curve_mut(1) = SurfaceCurve::invalid(8);
        assert_eq!(align_offsets(&grid, 256.0)[1], None);
    }

    #[test]
    fn uniform_uncertainty_pools_everything() {
        let grid = grid_from(4, 16, |b, x| 30.0 + b as f64 + 0.1 * x as f64);
        let unc = UncertaintyGrid::constant(4, 16, 0.5);
        let cfg = PostprocConfig { n_control: 20, ..Default::default() };
        let sel = select_control_points(&grid, &unc, &cfg).unwrap();
        assert_eq!(sel.pool_size, 64);
        assert_eq!(sel.points.len(), 20);
        assert_eq!(sel, select_control_points(&grid, &unc, &cfg).unwrap());
        let other = select_control_points(&grid, &unc, &PostprocConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(sel.points, other.points);
    }

    #[test]
    fn low_uncertainty_block_is_selected() {
        let grid = grid_from(2, 50, |_, _| 30.0);
        let mut unc = UncertaintyGrid::constant(2, 50, 9.0);
        let low: Vec<(usize, usize)> = (0..10).map(|i| (i % 2, 3 * i + 1)).collect();
        for &(b, x) in &low {
            unc.set(b, x, 0.1);
        }
        let cfg = PostprocConfig { n_control: 10, ..Default::default() };
        let mut sel = select_control_points(&grid, &unc, &cfg).unwrap().points;
        let mut expect = low.clone();
        sel.sort_unstable();
        expect.sort_unstable();
        assert_eq!(sel, expect);
    }

    #[test]
    fn nothing_replaced_when_all_confident() {
        let grid = grid_from(4, 32, |b, x| 20.0 + 0.3 * b as f64 + (x as f64 / 5.0).sin());
        let unc = UncertaintyGrid::constant(4, 32, 0.2);
        let (out, rep) = apply_postprocess(&grid, &unc, &PostprocConfig::default()).unwrap();
        assert_eq!(rep.replaced, 0);
        assert_eq!(out, grid);
    }

    #[test]
    fn confident_positions_are_bitwise_unchanged() {
        let grid = grid_from(5, 40, |b, x| 25.0 + 2.0 * (b as f64 * 0.7 + x as f64 * 0.21).sin());
        let mut unc = UncertaintyGrid::constant(5, 40, 0.3);
        for x in 10..20 {
            unc.set(2, x, 3.0);
        }
        let (out, rep) = apply_postprocess(&grid, &unc, &PostprocConfig { n_control: 64, ..Default::default() }).unwrap();
        assert_eq!(rep.replaced, 10);
        for b in 0..5 {
            for x in 0..40 {
                if unc.get(b, x).unwrap() <= 1.0 {
                    assert_eq!(out.get(b, x).unwrap().to_bits(), grid.get(b, x).unwrap().to_bits());
                }
            }
        }
        for s in rep.side_conditions.unwrap() {
            assert!(s.abs() < 1e-8);
        }
    }

    #[test]
    fn missing_positions_are_filled() {
        let mut grid = grid_from(3, 20, |b, x| 30.0 + 0.5 * b as f64 + 0.2 * x as f64);
        for b in 0..3 {
            grid.curve_mut(b).invalidate(7);
        }
        let unc = UncertaintyGrid::constant(3, 20, 0.2);
        let (out, rep) = apply_postprocess(&grid, &unc, &PostprocConfig::default()).unwrap();
        assert_eq!(rep.replaced, 3);
        // the same gap in every B-scan keeps the aligned data planar, which the spline reproduces
        for b in 0..3 {
            let expect = 30.0 + 0.5 * b as f64 + 1.4;
            assert!((out.get(b, 7).unwrap() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn translation_equivariance_is_exact_for_exact_shifts() {
        // dyadic positions keep every mean and shift exact, and the values stay in one binade
        let grid = grid_from(4, 32, |b, x| 40.0 + ((b * 7 + x * 3) % 17) as f64 / 8.0);
        let mut unc = UncertaintyGrid::constant(4, 32, 0.4);
        for x in 5..12 {
            unc.set(1, x, 4.0);
        }
        let cfg = PostprocConfig { n_control: 60, ..Default::default() };
        let k = 8.0;
        let (a, _) = apply_postprocess(&grid, &unc, &PostprocConfig { reference: Some(32.0), ..cfg }).unwrap();
        let (b, _) = apply_postprocess(&grid.shifted(k), &unc, &PostprocConfig { reference: Some(32.0 + k), ..cfg }).unwrap();
        assert_eq!(b, a.shifted(k));
    }

    #[test]
    fn too_few_points_passes_surface_through() {
        let mut grid = grid_from(1, 10, |_, _| 20.0);
        for x in 2..10 {
            grid.curve_mut(0).invalidate(x);
        }
        let unc = UncertaintyGrid::constant(1, 10, 0.1);
        let (out, rep) = apply_postprocess(&grid, &unc, &PostprocConfig::default()).unwrap();
        assert!(rep.skipped);
        assert_eq!(out, grid);
    }

    #[test]
    fn invalid_bscans_are_excluded_not_filled() {
        let mut grid = grid_from(3, 16, |_, x| 25.0 + 0.1 * x as f64);
        *grid.curve_mut(2) = SurfaceCurve::invalid(16);
        let unc = UncertaintyGrid::constant(3, 16, 0.5);
        let (out, rep) = apply_postprocess(&grid, &unc, &PostprocConfig::default()).unwrap();
        assert_eq!(rep.excluded_bscans, vec![2]);
        assert_eq!(out.curve(2).n_valid(), 0);
        assert_eq!(rep.offsets[2], None);
    }
}
