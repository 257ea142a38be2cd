//! Evaluation: localization errors, the smoothness histogram, uncertainty
//! versus error analysis, rank statistics and the ablation harness.

pub mod ablation;
pub mod output;
pub mod stats;
pub mod uncertainty;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::SurfaceGrid;

pub use ablation::{ablation_run, AblationConfig, AblationReport, Variant};
pub use stats::{spearman, spearman_permutation_p, wilcoxon_paired, wilcoxon_signed_rank, WilcoxonResult};
pub use uncertainty::{uncertainty_analysis, EvalCase, UncertaintyReport};

/// Errors beyond this many micrometers are counted separately.
pub const LARGE_ERROR_UM: f64 = 15.0;
/// Adjacent-column jumps beyond this many pixels count as smoothness tail.
pub const SMOOTHNESS_TAIL_PX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mae_px: f64,
    pub rmse_px: f64,
    pub mae_um: f64,
    pub rmse_um: f64,
    /// A-scans with `|error| > 15 µm`.
    pub n_large: usize,
}

impl ErrorStats {
    fn from_abs(abs_px: &[f64], um_per_px: f64) -> Option<Self> {
        if abs_px.is_empty() {
            return None;
        }
        let n = abs_px.len() as f64;
        let mae_px = abs_px.iter().sum::<f64>() / n;
        let rmse_px = (abs_px.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        Some(ErrorStats {
            n: abs_px.len(),
            mae_px,
            rmse_px,
            mae_um: mae_px * um_per_px,
            rmse_um: rmse_px * um_per_px,
            n_large: abs_px.iter().filter(|&&e| e * um_per_px > LARGE_ERROR_UM).count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub overall: ErrorStats,
    /// `None` for B-scans without a jointly valid A-scan.
    pub per_bscan: Vec<Option<ErrorStats>>,
}

fn check_same_shape(a: &SurfaceGrid, b: &SurfaceGrid) -> Result<()> {
    if a.n_bscans() != b.n_bscans() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "surfaces differ: {}x{} vs {}x{}",
            a.n_bscans(),
            a.width(),
            b.n_bscans(),
            b.width()
        )));
    }
    Ok(())
}

/// Signed errors `pred - ref` per B-scan, NaN where either is invalid.
pub fn signed_errors(pred: &SurfaceGrid, reference: &SurfaceGrid) -> Result<Vec<Vec<f64>>> {
    check_same_shape(pred, reference)?;
    Ok((0..pred.n_bscans())
        .map(|b| {
            (0..pred.width())
                .map(|x| match (pred.get(b, x), reference.get(b, x)) {
                    (Some(p), Some(r)) => p - r,
                    _ => f64::NAN,
                })
                .collect()
        })
        .collect())
}

/// MAE and RMSE over jointly valid A-scans, in pixels and micrometers.
pub fn localization_errors(pred: &SurfaceGrid, reference: &SurfaceGrid) -> Result<ErrorReport> {
    let um = reference.geometry().axial_um_per_px;
    let errs = signed_errors(pred, reference)?;
    let mut all = Vec::new();
    let per_bscan = errs
        .iter()
        .map(|row| {
            let abs: Vec<f64> = row.iter().filter(|e| !e.is_nan()).map(|e| e.abs()).collect();
            all.extend_from_slice(&abs);
            ErrorStats::from_abs(&abs, um)
        })
        .collect();
    let overall = ErrorStats::from_abs(&all, um).ok_or(Error::NoJointlyValid)?;
    Ok(ErrorReport { overall, per_bscan })
}

/// Pools several volumes into one set of statistics.
pub fn pooled_errors(pairs: &[(&SurfaceGrid, &SurfaceGrid)]) -> Result<ErrorStats> {
    let mut all = Vec::new();
    let mut um = None;
    for (p, r) in pairs {
        um.get_or_insert(r.geometry().axial_um_per_px);
        for row in signed_errors(p, r)? {
            all.extend(row.iter().filter(|e| !e.is_nan()).map(|e| e.abs()));
        }
    }
    ErrorStats::from_abs(&all, um.unwrap_or(1.0)).ok_or(Error::NoJointlyValid)
}

/// `μ(x+1) - μ(x)` for every adjacent pair valid in the same B-scan.
pub fn adjacent_differences(grid: &SurfaceGrid) -> Vec<f64> {
    let mut out = Vec::new();
    for c in grid.curves() {
        for x in 1..c.width() {
            if let (Some(a), Some(b)) = (c.get(x - 1), c.get(x)) {
                out.push(b - a);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub count: usize,
}

/// Signed histogram with bins centered on multiples of `bin_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessHistogram {
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
    pub total: usize,
    /// Pairs with `|Δ| > 4 px`.
    pub tail: usize,
}

impl SmoothnessHistogram {
    pub fn tail_mass(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.tail as f64 / self.total as f64
        }
    }

    pub fn count_at(&self, center: f64) -> usize {
        self.bins.iter().find(|b| b.center == center).map_or(0, |b| b.count)
    }
}

pub fn histogram_of(diffs: &[f64], bin_width: f64) -> Result<SmoothnessHistogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::Validation(format!("bin width must be > 0, got {bin_width}")));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for d in diffs {
        *counts.entry((d / bin_width).round() as i64).or_default() += 1;
    }
    Ok(SmoothnessHistogram {
        bin_width,
        bins: counts
            .into_iter()
            .map(|(k, count)| HistogramBin {
                center: k as f64 * bin_width,
                count,
            })
            .collect(),
        total: diffs.len(),
        tail: diffs.iter().filter(|d| d.abs() > SMOOTHNESS_TAIL_PX).count(),
    })
}

pub fn smoothness_histogram(grid: &SurfaceGrid, bin_width: f64) -> Result<SmoothnessHistogram> {
    histogram_of(&adjacent_differences(grid), bin_width)
}
