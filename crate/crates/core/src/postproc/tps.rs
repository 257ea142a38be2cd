//! Smoothing thin-plate spline over scattered `(u, v)` points.
//!
//! The fit solves
//!
//! ```text
//! [ K + λI  P ] [w]   [values]
//! [ Pᵀ      0 ] [c] = [  0   ]      K_ij = φ(|p_i - p_j|),  P_i = [1, u_i, v_i]
//! ```
//!
//! with `φ(r) = r² ln r` and `φ(0) = 0`. Coordinates are expected in roughly
//! unit range so that the rigidity λ has a consistent scale.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub u: f64,
    pub v: f64,
    pub value: f64,
}

/// How the coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpsSolver {
    /// Full kernel system.
    Spline,
    /// Kernel system with a constant coordinate axis dropped from the affine part.
    ReducedSpline,
    /// Least-squares plane; the kernel system was singular.
    AffineFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsModel {
    pub points: Vec<(f64, f64)>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// `c0 + c1·u + c2·v`.
    pub affine: [f64; 3],
    pub lambda: f64,
    pub solver: TpsSolver,
    /// Number of input points merged away as exact duplicates.
    pub merged_duplicates: usize,
}

#[inline]
pub fn kernel(r2: f64) -> f64 {
    // r² ln r written in terms of r² to avoid a square root
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Averages the values of points sharing identical coordinates.
/// Output is sorted by `(u, v)`.
pub fn dedupe(points: &[ControlPoint]) -> Vec<ControlPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.v.total_cmp(&b.v)));
    let mut out: Vec<ControlPoint> = Vec::with_capacity(sorted.len());
    let mut count = 0usize;
    for p in sorted {
        match out.last_mut() {
            Some(last) if last.u == p.u && last.v == p.v => {
                last.value += p.value;
                count += 1;
            }
            _ => {
                if let Some(last) = out.last_mut() {
                    last.value /= count as f64;
                }
                out.push(p);
                count = 1;
            }
        }
    }
    if let Some(last) = out.last_mut() {
        last.value /= count as f64;
    }
    out
}

fn all_equal(xs: impl Iterator<Item = f64>) -> bool {
    let mut it = xs;
    match it.next() {
        Some(first) => it.all(|x| x == first),
        None => true,
    }
}

/// Least-squares plane through the points; axes that are constant are dropped.
pub fn least_squares_plane(points: &[ControlPoint]) -> Result<[f64; 3]> {
    if points.is_empty() {
        return Err(Error::Validation("no points for a plane fit".into()));
    }
    let use_u = !all_equal(points.iter().map(|p| p.u));
    let use_v = !all_equal(points.iter().map(|p| p.v));
    let cols = 1 + use_u as usize + use_v as usize;
    let a = DMatrix::from_fn(points.len(), cols, |i, j| {
        let p = &points[i];
        match (j, use_u) {
            (0, _) => 1.0,
            (1, true) => p.u,
            _ => p.v,
        }
    });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.value));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Validation(format!("plane fit failed: {e}")))?;
    let mut c = [sol[0], 0.0, 0.0];
    let mut k = 1;
    if use_u {
        c[1] = sol[k];
        k += 1;
    }
    if use_v {
        c[2] = sol[k];
    }
    Ok(c)
}

/// Fits a smoothing thin-plate spline. Needs at least 3 distinct points.
pub fn tps_fit(points: &[ControlPoint], lambda: f64) -> Result<TpsModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Validation(format!("rigidity must be >= 0, got {lambda}")));
    }
    if points.iter().any(|p| !(p.u.is_finite() && p.v.is_finite() && p.value.is_finite())) {
        return Err(Error::Domain("control points must be finite".into()));
    }
    let pts = dedupe(points);
    let merged_duplicates = points.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::Validation(format!(
            "{} distinct control points, need at least 3",
            pts.len()
        )));
    }
    let n = pts.len();
    let use_u = !all_equal(pts.iter().map(|p| p.u));
    let use_v = !all_equal(pts.iter().map(|p| p.v));
    let m = 1 + use_u as usize + use_v as usize;
    let dim = n + m;

    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        for j in i..n {
            let (du, dv) = (pts[i].u - pts[j].u, pts[i].v - pts[j].v);
            let k = kernel(du * du + dv * dv);
            a[(i, j)] = k;
            a[(j, i)] = k;
        }
        a[(i, i)] += lambda;
        let mut col = n;
        let mut put = |val: f64| {
            a[(i, col)] = val;
            a[(col, i)] = val;
            col += 1;
        };
        put(1.0);
        if use_u {
            put(pts[i].u);
        }
        if use_v {
            put(pts[i].v);
        }
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    for (i, p) in pts.iter().enumerate() {
        rhs[i] = p.value;
    }

    let points_uv: Vec<(f64, f64)> = pts.iter().map(|p| (p.u, p.v)).collect();
    let values: Vec<f64> = pts.iter().map(|p| p.value).collect();
    let scale = 1.0 + rhs.amax();
    let solved = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()) && (&a * s - &rhs).amax() <= 1e-6 * scale);
    let Some(sol) = solved else {
        return Ok(TpsModel {
            affine: least_squares_plane(&pts)?,
            weights: vec![0.0; n],
            points: points_uv,
            values,
            lambda,
            solver: TpsSolver::AffineFallback,
            merged_duplicates,
        });
    };
    let mut affine = [sol[n], 0.0, 0.0];
    let mut k = n + 1;
    if use_u {
        affine[1] = sol[k];
        k += 1;
    }
    if use_v {
        affine[2] = sol[k];
    }
    Ok(TpsModel {
        weights: sol.rows(0, n).iter().copied().collect(),
        affine,
        points: points_uv,
        values,
        lambda,
        solver: if m == 3 { TpsSolver::Spline } else { TpsSolver::ReducedSpline },
        merged_duplicates,
    })
}

impl TpsModel {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut s = self.affine[0] + self.affine[1] * u + self.affine[2] * v;
        for (&(pu, pv), &w) in self.points.iter().zip(&self.weights) {
            let (du, dv) = (u - pu, v - pv);
            s += w * kernel(du * du + dv * dv);
        }
        s
    }

    /// `[Σw, Σw·u, Σw·v]`; zero for a well-posed fit.
    pub fn side_conditions(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (&(u, v), &w) in self.points.iter().zip(&self.weights) {
            out[0] += w;
            out[1] += w * u;
            out[2] += w * v;
        }
        out
    }

    /// Largest absolute difference between the surface and its control values.
    pub fn max_residual(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(&(u, v), &z)| (self.eval(u, v) - z).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluates the model at every query; parallel over queries.
pub fn tps_eval(model: &TpsModel, queries: &[(f64, f64)]) -> Vec<f64> {
    queries.par_iter().map(|&(u, v)| model.eval(u, v)).collect()
}
