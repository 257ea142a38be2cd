//! How well the predicted spread `σ̂` tracks the actual localization error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{spearman, spearman_permutation_p};
use crate::error::{Error, Result};
use crate::surface::{SurfaceGrid, UncertaintyGrid};

/// One volume: prediction, reference and predicted spread.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub pred: &'a SurfaceGrid,
    pub reference: &'a SurfaceGrid,
    pub unc: &'a UncertaintyGrid,
}

/// One A-scan with a prediction, a reference and a spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscanRecord {
    pub volume: usize,
    pub bscan: usize,
    pub x: usize,
    pub pred: f64,
    pub reference: f64,
    pub abs_error_px: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub volume: usize,
    /// `None` for a volume-level group.
    pub bscan: Option<usize>,
    pub n: usize,
    pub mean_sigma: f64,
    pub mae_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileRow {
    pub quintile: usize,
    pub n: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub q25_abs_error: f64,
    pub q75_abs_error: f64,
    pub max_abs_error: f64,
}

/// Mean absolute error among A-scans whose `σ̂` rounds to `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub sigma: f64,
    pub n: usize,
    pub mean_abs_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub n_ascans: usize,
    /// Spearman correlations; `None` when undefined (constant input or
    /// fewer than 3 groups).
    pub scc_ascan: Option<f64>,
    pub scc_bscan: Option<f64>,
    pub scc_volume: Option<f64>,
    /// One-sided permutation p-value for a positive A-scan correlation.
    pub ascan_p_value: Option<f64>,
    pub quintiles: Vec<QuintileRow>,
    pub calibration: Vec<CalibrationPoint>,
    pub bscans: Vec<GroupMean>,
    pub volumes: Vec<GroupMean>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            n_permutations: 999,
            seed: 0,
        }
    }
}

/// A-scans valid in prediction, reference and spread, in volume/B-scan/column order.
pub fn ascan_records(cases: &[EvalCase]) -> Result<Vec<AscanRecord>> {
    let mut out = Vec::new();
    for (v, c) in cases.iter().enumerate() {
        if c.pred.n_bscans() != c.reference.n_bscans() || c.pred.width() != c.reference.width() || !c.unc.matches(c.pred)
        {
            return Err(Error::Shape(format!("volume {v}: prediction, reference and spread differ in shape")));
        }
        for b in 0..c.pred.n_bscans() {
            for x in 0..c.pred.width() {
                if let (Some(p), Some(r), Some(s)) = (c.pred.get(b, x), c.reference.get(b, x), c.unc.get(b, x)) {
                    out.push(AscanRecord {
                        volume: v,
                        bscan: b,
                        x,
                        pred: p,
                        reference: r,
                        abs_error_px: (p - r).abs(),
                        sigma: s,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn group_means(records: &[AscanRecord], by_bscan: bool) -> Vec<GroupMean> {
    let mut acc: BTreeMap<(usize, Option<usize>), (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let key = (r.volume, by_bscan.then_some(r.bscan));
        let e = acc.entry(key).or_default();
        e.0 += 1;
        e.1 += r.sigma;
        e.2 += r.abs_error_px;
    }
    acc.into_iter()
        .map(|((volume, bscan), (n, s, e))| GroupMean {
            volume,
            bscan,
            n,
            mean_sigma: s / n as f64,
            mae_px: e / n as f64,
        })
        .collect()
}

fn group_scc(groups: &[GroupMean]) -> Option<f64> {
    if groups.len() < 3 {
        return None;
    }
    let s: Vec<f64> = groups.iter().map(|g| g.mean_sigma).collect();
    let e: Vec<f64> = groups.iter().map(|g| g.mae_px).collect();
    spearman(&s, &e).ok()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Splits A-scans into five equally sized groups by ascending `σ̂`.
pub fn quintile_table(records: &[AscanRecord]) -> Vec<QuintileRow> {
    let mut order: Vec<&AscanRecord> = records.iter().collect();
    order.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    let n = order.len();
    (0..5)
        .filter_map(|q| {
            let group = &order[q * n / 5..(q + 1) * n / 5];
            if group.is_empty() {
                return None;
            }
            let mut errs: Vec<f64> = group.iter().map(|r| r.abs_error_px).collect();
            errs.sort_by(f64::total_cmp);
            Some(QuintileRow {
                quintile: q + 1,
                n: group.len(),
                sigma_min: group[0].sigma,
                sigma_max: group[group.len() - 1].sigma,
                mean_abs_error: errs.iter().sum::<f64>() / errs.len() as f64,
                median_abs_error: quantile(&errs, 0.5),
                q25_abs_error: quantile(&errs, 0.25),
                q75_abs_error: quantile(&errs, 0.75),
                max_abs_error: errs[errs.len() - 1],
            })
        })
        .collect()
}

/// Mean `|error|` per `σ̂` rounded to one decimal, with a normal 95% band on the mean.
pub fn calibration_curve(records: &[AscanRecord]) -> Vec<CalibrationPoint> {
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in records {
        bins.entry((r.sigma * 10.0).round() as i64).or_default().push(r.abs_error_px);
    }
    bins.into_iter()
        .map(|(k, errs)| {
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let sd = if errs.len() > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / n.sqrt();
            CalibrationPoint {
                sigma: k as f64 / 10.0,
                n: errs.len(),
                mean_abs_error: mean,
                ci_low: mean - half,
                ci_high: mean + half,
            }
        })
        .collect()
}

pub fn uncertainty_analysis(cases: &[EvalCase], cfg: &UncertaintyConfig) -> Result<UncertaintyReport> {
    let records = ascan_records(cases)?;
    if records.is_empty() {
        return Err(Error::NoJointlyValid);
    }
    let sig: Vec<f64> = records.iter().map(|r| r.sigma).collect();
    let err: Vec<f64> = records.iter().map(|r| r.abs_error_px).collect();
    let (scc_ascan, ascan_p_value) = if records.len() >= 3 {
        match spearman(&sig, &err) {
            Ok(r) => (Some(r), Some(spearman_permutation_p(&sig, &err, cfg.n_permutations, cfg.seed)?)),
            Err(Error::UndefinedCorrelation(_)) => (None, None),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let bscans = group_means(&records, true);
    let volumes = group_means(&records, false);
    Ok(UncertaintyReport {
        n_ascans: records.len(),
        scc_ascan,
        scc_bscan: group_scc(&bscans),
        scc_volume: group_scc(&volumes),
        ascan_p_value,
        quintiles: quintile_table(&records),
        calibration: calibration_curve(&records),
        bscans,
        volumes,
    })
}
