//! Trains and evaluates loss / post-processing variants under identical seeds.

use serde::{Deserialize, Serialize};

use super::stats::{wilcoxon_paired, WilcoxonResult};
use super::{localization_errors, pooled_errors, smoothness_histogram, ErrorStats};
use crate::error::{Error, Result};
use crate::phantom::Phantom;
use crate::postproc::{apply_postprocess, PostprocConfig};
use crate::predictor::{infer_volume, samples_from_phantoms, train, EpochLog, ToyNet, ToyNetConfig, TrainConfig};
use crate::surface::SurfaceGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Position and distribution terms only.
    Base,
    /// Adds the curvature term.
    Curvature,
    /// Curvature term plus spline post-processing.
    CurvatureTps,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::Curvature, Variant::CurvatureTps];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "l1+l2",
            Variant::Curvature => "l1+l2+l3",
            Variant::CurvatureTps => "l1+l2+l3+tps",
        }
    }

    fn uses_curvature(self) -> bool {
        self != Variant::Base
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    pub net: ToyNetConfig,
    /// Loss weights of the base variant; curvature variants use `gamma`.
    pub train: TrainConfig,
    pub gamma: f64,
    pub postproc: PostprocConfig,
    /// Seeds both the initial weights and the training order.
    pub seed: u64,
    pub jobs: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            variants: Variant::ALL.to_vec(),
            net: ToyNetConfig::default(),
            train: TrainConfig::default(),
            gamma: 1.0,
            postproc: PostprocConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub errors: ErrorStats,
    /// Fraction of adjacent-column jumps larger than 4 px.
    pub tail_mass: f64,
    pub per_volume_mae: Vec<f64>,
    pub train_log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub from: Variant,
    pub to: Variant,
    /// Paired over per-volume MAE.
    pub wilcoxon: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub results: Vec<VariantResult>,
    pub comparisons: Vec<VariantComparison>,
}

impl AblationReport {
    pub fn result(&self, v: Variant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == v)
    }
}

/// Trains one net per distinct loss setting and scores every variant on `test`.
pub fn ablation_run(train_set: &[Phantom], test: &[Phantom], cfg: &AblationConfig) -> Result<AblationReport> {
    if cfg.variants.is_empty() || test.is_empty() {
        return Err(Error::Validation("ablation needs at least one variant and one test volume".into()));
    }
    let data = samples_from_phantoms(train_set)?;
    let mut trained: Vec<(bool, ToyNet, Vec<EpochLog>)> = Vec::new();
    let mut results = Vec::new();

    for &variant in &cfg.variants {
        let curv = variant.uses_curvature();
        if !trained.iter().any(|t| t.0 == curv) {
            let mut tcfg = cfg.train.clone();
            tcfg.seed = cfg.seed;
            tcfg.jobs = cfg.jobs;
            tcfg.loss.gamma = if curv { cfg.gamma } else { 0.0 };
            let mut net = ToyNet::new(ToyNetConfig { seed: cfg.seed, ..cfg.net.clone() })?;
            let log = train(&mut net, &data, &tcfg)?;
            trained.push((curv, net, log));
        }
        let (_, net, log) = trained.iter().find(|t| t.0 == curv).expect("trained above");

        let mut preds: Vec<SurfaceGrid> = Vec::with_capacity(test.len());
        for ph in test {
            let inf = infer_volume(net, &ph.volume, false, cfg.jobs)?;
            let surface = if variant == Variant::CurvatureTps {
                apply_postprocess(&inf.surface, &inf.uncertainty, &PostprocConfig { seed: cfg.seed, ..cfg.postproc })?.0
            } else {
                inf.surface
            };
            preds.push(surface);
        }
        let pairs: Vec<(&SurfaceGrid, &SurfaceGrid)> = preds.iter().zip(test.iter().map(|p| &p.truth)).collect();
        let errors = pooled_errors(&pairs)?;
        let per_volume_mae = pairs
            .iter()
            .map(|(p, r)| localization_errors(p, r).map(|e| e.overall.mae_px))
            .collect::<Result<Vec<_>>>()?;
        let (mut tail, mut total) = (0usize, 0usize);
        for p in &preds {
            let h = smoothness_histogram(p, 1.0)?;
            tail += h.tail;
            total += h.total;
        }
        results.push(VariantResult {
            variant,
            errors,
            tail_mass: if total == 0 { 0.0 } else { tail as f64 / total as f64 },
            per_volume_mae,
            train_log: log.clone(),
        });
    }

    let comparisons = results
        .windows(2)
        .map(|w| {
            Ok(VariantComparison {
                from: w[0].variant,
                to: w[1].variant,
                wilcoxon: wilcoxon_paired(&w[1].per_volume_mae, &w[0].per_volume_mae)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        seed: cfg.seed,
        results,
        comparisons,
    })
}
