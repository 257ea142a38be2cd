//! Mini-batch training with Adam and milestone learning-rate decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{apply_plan, sample_plan, AugmentConfig, AugmentPlan};
use super::net::ToyNet;
use crate::error::{Error, Result};
use crate::geometry::{BScanImage, Volume};
use crate::phantom::Phantom;
use crate::preprocess::{exclude_bscans, z_normalize, DEFAULT_MAX_UNDEFINED_FRAC};
use crate::shape::LossConfig;
use crate::surface::{SurfaceCurve, SurfaceGrid};

/// One preprocessed B-scan with its reference boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: BScanImage,
    pub reference: SurfaceCurve,
}

/// Z-normalized B-scans of one volume, skipping those whose reference is
/// undefined in more than 20% of the A-scans.
pub fn samples_from_volume(volume: &Volume, truth: &SurfaceGrid) -> Result<Vec<TrainSample>> {
    let g = volume.geometry();
    if truth.n_bscans() != g.n_bscans || truth.width() != g.width {
        return Err(Error::Shape("reference surface does not match the volume".into()));
    }
    Ok(exclude_bscans(truth, DEFAULT_MAX_UNDEFINED_FRAC)?
        .into_iter()
        .map(|b| TrainSample {
            image: z_normalize(volume.bscan(b)).image,
            reference: truth.curve(b).clone(),
        })
        .collect())
}

pub fn samples_from_phantoms(phantoms: &[Phantom]) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for ph in phantoms {
        out.extend(samples_from_volume(&ph.volume, &ph.truth)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs (1-based) at whose start the rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Worker threads for per-sample gradients; results do not depend on it,
    /// so it is not serialized.
    #[serde(skip, default = "one")]
    pub jobs: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 0.01,
            milestones: vec![3, 7, 10, 30],
            decay: 0.7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment.probability) {
            return Err(Error::Validation(format!(
                "augmentation probability {} outside [0, 1]",
                self.augment.probability
            )));
        }
        if !(self.learning_rate >= 0.0 && self.decay > 0.0) {
            return Err(Error::Validation("learning rate must be >= 0 and decay > 0".into()));
        }
        self.loss.validate()
    }

    /// Rate used during `epoch` (1-based): every milestone reached so far
    /// applies one `decay` factor, and past the last listed milestone another
    /// one every 20 epochs.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let mut cuts = self.milestones.iter().filter(|&&m| epoch >= m).count();
        if let Some(&last) = self.milestones.iter().max() {
            if epoch > last {
                cuts += (epoch - last) / 20;
            }
        }
        self.learning_rate * self.decay.powi(cuts as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

struct SampleResult {
    total: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    grads: Vec<f64>,
}

fn run_sample(net: &ToyNet, s: &TrainSample, plan: &AugmentPlan, cfg: &LossConfig) -> Result<SampleResult> {
    let (img, reference) = if plan.is_identity() {
        (s.image.clone(), s.reference.clone())
    } else {
        let (img, r) = apply_plan(&s.image, &s.reference, plan);
        // too much of the curve pushed out of frame: train on the original pair
        if r.invalid_fraction() > DEFAULT_MAX_UNDEFINED_FRAC {
            (s.image.clone(), s.reference.clone())
        } else {
            (img, r)
        }
    };
    let (loss, grads) = net.backward(&img, &reference, cfg)?;
    Ok(SampleResult {
        total: loss.total,
        l1: loss.l1,
        l2: loss.l2,
        l3: loss.l3,
        grads,
    })
}

/// Trains `net` in place and returns the per-epoch mean losses.
pub fn train(net: &mut ToyNet, data: &[TrainSample], cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.n_params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for batch in order.chunks(cfg.batch_size) {
            // plans are drawn serially so results do not depend on thread count
            let plans: Vec<AugmentPlan> = batch
                .iter()
                .map(|&i| sample_plan(&cfg.augment, data[i].image.rows(), data[i].image.cols(), &mut rng))
                .collect();
            let results: Vec<Result<SampleResult>> = if cfg.jobs > 1 {
                pool.install(|| {
                    batch
                        .par_iter()
                        .zip(plans.par_iter())
                        .map(|(&i, plan)| run_sample(net, &data[i], plan, &cfg.loss))
                        .collect()
                })
            } else {
                batch
                    .iter()
                    .zip(&plans)
                    .map(|(&i, plan)| run_sample(net, &data[i], plan, &cfg.loss))
                    .collect()
            };
            let mut grads = vec![0.0; net.n_params()];
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let r = r?;
                if !r.total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: r.total,
                    });
                }
                sums[0] += r.total;
                sums[1] += r.l1;
                sums[2] += r.l2;
                sums[3] += r.l3;
                for (g, v) in grads.iter_mut().zip(&r.grads) {
                    *g += v * scale;
                }
            }
            adam.step(net.params_mut(), &grads, lr);
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: f64::NAN,
                });
            }
            step += 1;
        }
        let n = data.len() as f64;
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            total: sums[0] / n,
            l1: sums[1] / n,
            l2: sums[2] / n,
            l3: sums[3] / n,
        });
    }
    Ok(log)
}
