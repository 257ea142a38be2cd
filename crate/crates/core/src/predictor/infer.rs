//! Volume inference: per-B-scan logits, column PMFs, expected positions and spreads.

use rayon::prelude::*;

use super::net::LogitPredictor;
use crate::error::Result;
use crate::geometry::Volume;
use crate::pmf::{column_softmax, column_std, expected_position, ProbMap};
use crate::preprocess::z_normalize;
use crate::surface::{SurfaceCurve, SurfaceGrid, UncertaintyGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub surface: SurfaceGrid,
    pub uncertainty: UncertaintyGrid,
    /// One map per B-scan when requested.
    pub prob_maps: Option<Vec<ProbMap>>,
}

fn infer_bscan<P: LogitPredictor>(net: &P, volume: &Volume, b: usize) -> Result<(SurfaceCurve, Vec<f64>, ProbMap)> {
    let img = z_normalize(volume.bscan(b)).image;
    let p = column_softmax(&net.forward(&img)?);
    Ok((expected_position(&p), column_std(&p), p))
}

/// Runs `net` on every B-scan of `volume`. Each B-scan is z-normalized first.
/// `jobs` > 1 spreads B-scans over that many threads; output is identical.
pub fn infer_volume<P: LogitPredictor + Sync>(
    net: &P,
    volume: &Volume,
    keep_prob_maps: bool,
    jobs: usize,
) -> Result<Inference> {
    let n = volume.bscans().len();
    let per_bscan: Vec<Result<_>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::Validation(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(|b| infer_bscan(net, volume, b)).collect())
    } else {
        (0..n).map(|b| infer_bscan(net, volume, b)).collect()
    };

    let mut curves = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n * volume.geometry().width);
    let mut maps = Vec::new();
    for r in per_bscan {
        let (mu, sd, p) = r?;
        curves.push(mu);
        sigma.extend(sd);
        if keep_prob_maps {
            maps.push(p);
        }
    }
    Ok(Inference {
        surface: SurfaceGrid::new(*volume.geometry(), curves)?,
        uncertainty: UncertaintyGrid::new(n, volume.geometry().width, sigma)?,
        prob_maps: keep_prob_maps.then_some(maps),
    })
}
