//! Column-wise probability maps: softmax over rows, soft-argmax position,
//! spread, Gaussian targets, and the position and distribution losses with
//! their gradients.
//!
//! Rows are indexed from 0, so positions live in `[0, H - 1]`. Maps are
//! row-major `H x W`; every column is one A-scan.

use crate::error::{Error, Result};
use crate::surface::SurfaceCurve;

/// Raw network outputs before the column softmax, row-major `H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LogitMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "logit map {rows}x{cols} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("logits must be finite".into()));
        }
        Ok(LogitMap { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.cols + x]
    }
}

/// Column-stochastic `H x W` map: every column is a distribution over rows.
///
/// Columns can be flagged as excluded (e.g. a target built for an undefined
/// reference position); excluded columns are skipped by the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    included: Vec<bool>,
    /// Exact natural logs when the producer knows them; survives underflow
    /// of `values` far in the tails.
    log_values: Option<Vec<f64>>,
}

impl ProbMap {
    /// Validates nonnegativity and unit column sums (within 1e-9).
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "probability map {rows}x{cols} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("probabilities must be finite and nonnegative".into()));
        }
        let map = ProbMap {
            rows,
            cols,
            values,
            included: vec![true; cols],
            log_values: None,
        };
        for x in 0..cols {
            let s: f64 = map.column(x).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("column {x} sums to {s}")));
            }
        }
        Ok(map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.cols + x]
    }

    pub fn column(&self, x: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[x..].iter().step_by(self.cols).copied()
    }

    /// Natural log of the probability at `(y, x)`.
    #[inline]
    pub fn ln(&self, y: usize, x: usize) -> f64 {
        match &self.log_values {
            Some(l) => l[y * self.cols + x],
            None => self.get(y, x).ln(),
        }
    }

    pub fn is_included(&self, x: usize) -> bool {
        self.included[x]
    }

    pub fn included_mask(&self) -> &[bool] {
        &self.included
    }
}

/// Standard deviation of the Gaussian target, in pixels of the resized image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    pub sigma_target: f64,
}

impl TargetParams {
    pub fn new(sigma_target: f64) -> Result<Self> {
        if !(sigma_target.is_finite() && sigma_target > 0.0) {
            return Err(Error::Validation(format!(
                "target sigma must be positive, got {sigma_target}"
            )));
        }
        Ok(TargetParams { sigma_target })
    }
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams { sigma_target: 1.0 }
    }
}

/// Loss value together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Softmax down every column, stabilized by subtracting the column maximum.
pub fn column_softmax(logits: &LogitMap) -> ProbMap {
    let (h, w) = (logits.rows, logits.cols);
    let mut values = vec![0.0; h * w];
    let mut logs = vec![0.0; h * w];
    for x in 0..w {
        let mut max = f64::NEG_INFINITY;
        for y in 0..h {
            max = max.max(logits.values[y * w + x]);
        }
        let mut sum = 0.0;
        for y in 0..h {
            let e = (logits.values[y * w + x] - max).exp();
            values[y * w + x] = e;
            sum += e;
        }
        let log_sum = sum.ln();
        for y in 0..h {
            values[y * w + x] /= sum;
            logs[y * w + x] = logits.values[y * w + x] - max - log_sum;
        }
    }
    ProbMap {
        rows: h,
        cols: w,
        values,
        included: vec![true; w],
        log_values: Some(logs),
    }
}

/// Soft-argmax: the mean row index of every column.
pub fn expected_position(p: &ProbMap) -> SurfaceCurve {
    SurfaceCurve::new(
        (0..p.cols)
            .map(|x| p.column(x).enumerate().map(|(y, v)| y as f64 * v).sum())
            .collect(),
    )
}

/// Standard deviation of every column around its mean.
pub fn column_std(p: &ProbMap) -> Vec<f64> {
    let mu = expected_position(p);
    (0..p.cols)
        .map(|x| {
            let m = mu.positions()[x];
            p.column(x)
                .enumerate()
                .map(|(y, v)| (y as f64 - m).powi(2) * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Discretized Gaussian centered on each reference position, renormalized
/// over the `rows` pixels. Undefined reference columns become uniform and
/// are flagged as excluded.
pub fn gaussian_target(mu: &SurfaceCurve, params: TargetParams, rows: usize) -> ProbMap {
    let w = mu.width();
    let mut values = vec![0.0; rows * w];
    let mut logs = vec![0.0; rows * w];
    let mut included = vec![true; w];
    let two_var = 2.0 * params.sigma_target * params.sigma_target;
    for x in 0..w {
        match mu.get(x) {
            Some(m) => {
                // Shift the exponent by the nearest-row distance so that at least one
                // row evaluates to ~1 and tiny sigmas cannot underflow the column.
                let nearest = m.round().clamp(0.0, (rows - 1) as f64);
                let base = (nearest - m).powi(2) / two_var;
                let mut sum = 0.0;
                for y in 0..rows {
                    let a = -((y as f64 - m).powi(2) / two_var - base);
                    logs[y * w + x] = a;
                    let e = a.exp();
                    values[y * w + x] = e;
                    sum += e;
                }
                let log_sum = sum.ln();
                for y in 0..rows {
                    values[y * w + x] /= sum;
                    logs[y * w + x] -= log_sum;
                }
            }
            None => {
                included[x] = false;
                for y in 0..rows {
                    values[y * w + x] = 1.0 / rows as f64;
                    logs[y * w + x] = -(rows as f64).ln();
                }
            }
        }
    }
    ProbMap {
        rows,
        cols: w,
        values,
        included,
        log_values: Some(logs),
    }
}

/// Mean squared position error over columns valid in both curves.
/// The gradient is with respect to `pred` and is zero on skipped columns.
pub fn loss_l1(pred: &SurfaceCurve, reference: &SurfaceCurve) -> Result<LossGrad> {
    if pred.width() != reference.width() {
        return Err(Error::Shape(format!(
            "curve widths differ: {} vs {}",
            pred.width(),
            reference.width()
        )));
    }
    let joint: Vec<usize> = (0..pred.width())
        .filter(|&x| pred.is_valid(x) && reference.is_valid(x))
        .collect();
    if joint.is_empty() {
        return Err(Error::UndefinedLoss("no columns valid in both curves"));
    }
    let n = joint.len() as f64;
    let mut grad = vec![0.0; pred.width()];
    let mut value = 0.0;
    for &x in &joint {
        let d = pred.positions()[x] - reference.positions()[x];
        value += d * d;
        grad[x] = 2.0 * d / n;
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Column-averaged KL divergence `KL(P || T)` over the target's included
/// columns. The gradient is with respect to the logits that produced `p`.
pub fn loss_l2(p: &ProbMap, target: &ProbMap) -> Result<LossGrad> {
    if p.rows != target.rows || p.cols != target.cols {
        return Err(Error::Shape(format!(
            "maps differ: {}x{} vs {}x{}",
            p.rows, p.cols, target.rows, target.cols
        )));
    }
    let (h, w) = (p.rows, p.cols);
    let cols: Vec<usize> = (0..w)
        .filter(|&x| target.included[x] && p.included[x])
        .collect();
    if cols.is_empty() {
        return Err(Error::UndefinedLoss("no included target columns"));
    }
    let n = cols.len() as f64;
    let mut grad = vec![0.0; h * w];
    let mut value = 0.0;
    let mut log_ratio = vec![0.0; h];
    for &x in &cols {
        let mut kl = 0.0;
        for y in 0..h {
            let pv = p.values[y * w + x];
            let lt = target.ln(y, x);
            log_ratio[y] = if pv > 0.0 {
                if lt == f64::NEG_INFINITY {
                    return Err(Error::Domain(format!("target is zero at row {y}, column {x}")));
                }
                p.ln(y, x) - lt
            } else {
                0.0
            };
            kl += pv * log_ratio[y];
        }
        value += kl;
        // d/dz_j KL = P_j (ln(P_j / T_j) - KL)
        for y in 0..h {
            let pv = p.values[y * w + x];
            grad[y * w + x] = pv * (log_ratio[y] - kl) / n;
        }
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Pulls a gradient with respect to the soft-argmax positions back through
/// `expected_position` and the softmax onto the logits.
pub fn expected_position_backward(p: &ProbMap, grad_mu: &[f64]) -> Vec<f64> {
    let (h, w) = (p.rows, p.cols);
    let mu = expected_position(p);
    let mut grad = vec![0.0; h * w];
    for x in 0..w {
        let g = grad_mu[x];
        if g == 0.0 {
            continue;
        }
        let m = mu.positions()[x];
        for y in 0..h {
            grad[y * w + x] = p.values[y * w + x] * g * (y as f64 - m);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column_map(col: &[f64]) -> ProbMap {
        ProbMap::new(col.len(), 1, col.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = column_softmax(&LogitMap::new(4, 1, vec![3.0; 4]).unwrap());
        for v in p.column(0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = column_softmax(&LogitMap::new(4, 1, vec![1000.0, 0.0, 0.0, 0.0]).unwrap());
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(p.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_columns_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..24).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = column_softmax(&LogitMap::new(8, 3, logits).unwrap());
        for x in 0..3 {
            let direct: f64 = (0..8).map(|y| p.get(y, x)).sum();
            assert!((direct - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_position_examples() {
        let mut one_hot = vec![0.0; 6];
        one_hot[2] = 1.0;
        assert_eq!(expected_position(&column_map(&one_hot)).positions(), &[2.0]);
        assert!((expected_position(&column_map(&[0.1; 10])).positions()[0] - 4.5).abs() < 1e-12);
        let sym = [0.0, 0.25, 0.5, 0.25, 0.0];
        assert!((expected_position(&column_map(&sym)).positions()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn column_std_examples() {
        assert_eq!(column_std(&column_map(&[0.0, 1.0, 0.0])), vec![0.0]);
        assert!((column_std(&column_map(&[0.5, 0.0, 0.5]))[0] - 1.0).abs() < 1e-15);
        assert!((column_std(&column_map(&[0.25; 4]))[0] - (15.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_target_examples() {
        let params = TargetParams::new(1.0).unwrap();
        let t = gaussian_target(&SurfaceCurve::new(vec![2.0]), params, 5);
        assert!((t.get(1, 0) - t.get(3, 0)).abs() < 1e-15);
        assert!(t.get(2, 0) > t.get(1, 0));

        let t = gaussian_target(&SurfaceCurve::new(vec![3.3]), TargetParams::new(0.05).unwrap(), 8);
        assert!((t.get(3, 0) - 1.0).abs() < 1e-12);

        let t = gaussian_target(&SurfaceCurve::new(vec![4.5]), params, 10);
        // direct summation over the 10 rows
        let w: Vec<f64> = (0..10).map(|y| (-(y as f64 - 4.5f64).powi(2) / 2.0).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = w.iter().enumerate().map(|(y, v)| y as f64 * v / z).sum();
        assert!((mean - 4.5).abs() < 1e-9);
        assert!((expected_position(&t).positions()[0] - 4.5).abs() < 1e-9);
    }

    #[test]
    fn invalid_reference_gives_excluded_uniform_column() {
        let t = gaussian_target(&SurfaceCurve::new(vec![f64::NAN, 2.0]), TargetParams::default(), 4);
        assert!(!t.is_included(0));
        assert!(t.is_included(1));
        assert!(t.column(0).all(|v| v == 0.25));
    }

    #[test]
    fn l1_examples() {
        let r = SurfaceCurve::new(vec![1.0, 2.0, 3.0, 4.0]);
        let same = loss_l1(&r, &r).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(same.grad.iter().all(|&g| g == 0.0));

        let off = SurfaceCurve::new(vec![1.0, 4.0, 3.0, 4.0]);
        let l = loss_l1(&off, &r).unwrap();
        assert_eq!(l.value, 1.0);
        assert_eq!(l.grad, vec![0.0, 1.0, 0.0, 0.0]);

        let none = SurfaceCurve::invalid(4);
        assert!(matches!(loss_l1(&none, &r), Err(Error::UndefinedLoss(_))));
    }

    #[test]
    fn l1_masks_reference_gaps() {
        let r = SurfaceCurve::new(vec![1.0, f64::NAN, 3.0]);
        let p = SurfaceCurve::new(vec![2.0, 100.0, 3.0]);
        let l = loss_l1(&p, &r).unwrap();
        assert_eq!(l.value, 0.5);
        assert_eq!(l.grad[1], 0.0);
    }

    #[test]
    fn l2_of_identical_maps_is_zero() {
        let t = gaussian_target(&SurfaceCurve::new(vec![2.0, 5.5]), TargetParams::default(), 9);
        let l = loss_l2(&t, &t).unwrap();
        assert!(l.value.abs() < 1e-15);
        assert!(l.grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn l2_three_row_example() {
        let e = (-0.5f64).exp();
        let z = 1.0 + 2.0 * e;
        let t = ProbMap::new(3, 1, vec![e / z, 1.0 / z, e / z]).unwrap();
        let p = ProbMap::new(3, 1, vec![1.0 / 3.0; 3]).unwrap();
        // direct summation: sum_y (1/3) ln((1/3) / T_y)
        let oracle: f64 = [e / z, 1.0 / z, e / z]
            .iter()
            .map(|tv| (1.0 / 3.0) * ((1.0 / 3.0) / tv).ln())
            .sum();
        let l = loss_l2(&p, &t).unwrap();
        assert!((l.value - oracle).abs() < 1e-15);
        assert!((l.value - 0.0290).abs() < 2e-4);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn l1_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = SurfaceCurve::from_fn(16, |_| rng.random_range(0.0..30.0));
        let p: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..30.0)).collect();
        let analytic = loss_l1(&SurfaceCurve::new(p.clone()), &r).unwrap().grad;
        let eps = 1e-5;
        for x in 0..16 {
            let mut a = p.clone();
            let mut b = p.clone();
            a[x] += eps;
            b[x] -= eps;
            let fd = (loss_l1(&SurfaceCurve::new(a), &r).unwrap().value
                - loss_l1(&SurfaceCurve::new(b), &r).unwrap().value)
                / (2.0 * eps);
            assert!(rel_err(analytic[x], fd) < 1e-6, "column {x}");
        }
    }

    #[test]
    fn l2_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (8, 4);
        let logits: Vec<f64> = (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = SurfaceCurve::from_fn(w, |_| rng.random_range(1.0..6.0));
        let t = gaussian_target(&mu, TargetParams::default(), h);
        let f = |z: &[f64]| {
            let p = column_softmax(&LogitMap::new(h, w, z.to_vec()).unwrap());
            loss_l2(&p, &t).unwrap()
        };
        let analytic = f(&logits).grad;
        let eps = 1e-5;
        for i in 0..h * w {
            let mut a = logits.clone();
            let mut b = logits.clone();
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&a).value - f(&b).value) / (2.0 * eps);
            assert!(rel_err(analytic[i], fd) < 1e-6, "logit {i}: {} vs {fd}", analytic[i]);
        }
    }

    #[test]
    fn l2_stays_finite_when_target_tails_underflow() {
        // rows 40+ away from the reference underflow to exactly zero
        let (h, w) = (128, 2);
        let t = gaussian_target(&SurfaceCurve::new(vec![2.0, 120.0]), TargetParams::default(), h);
        assert_eq!(t.get(100, 0), 0.0);
        let p = column_softmax(&LogitMap::new(h, w, vec![0.0; h * w]).unwrap());
        let l = loss_l2(&p, &t).unwrap();
        assert!(l.value.is_finite() && l.value > 0.0);
        // uniform P: KL = -ln H - mean ln T, with ln T known in closed form
        let col0: f64 = (0..h).map(|y| -(y as f64 - 2.0).powi(2) / 2.0).sum::<f64>() / h as f64;
        let expect0 = -(h as f64).ln() - (col0 + t.ln(2, 0));
        let col1: f64 = (0..h).map(|y| -(y as f64 - 120.0).powi(2) / 2.0).sum::<f64>() / h as f64;
        let expect1 = -(h as f64).ln() - (col1 + t.ln(120, 1));
        assert!(rel_err(l.value, 0.5 * (expect0 + expect1)) < 1e-12);
        assert!(l.grad.iter().all(|g| g.is_finite()));
    }

    proptest! {
        #[test]
        fn softmax_sums_for_large_logits(col in prop::collection::vec(-1e4f64..1e4, 2..40)) {
            let h = col.len();
            let p = column_softmax(&LogitMap::new(h, 1, col).unwrap());
            let s: f64 = p.column(0).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn position_and_spread_are_shift_invariant(
            col in prop::collection::vec(-20.0f64..20.0, 2..30),
            shift in -100.0f64..100.0,
        ) {
            let h = col.len();
            let shifted: Vec<f64> = col.iter().map(|v| v + shift).collect();
            let a = column_softmax(&LogitMap::new(h, 1, col).unwrap());
            let b = column_softmax(&LogitMap::new(h, 1, shifted).unwrap());
            let (ma, mb) = (expected_position(&a).positions()[0], expected_position(&b).positions()[0]);
            prop_assert!((ma - mb).abs() < 1e-9);
            prop_assert!((column_std(&a)[0] - column_std(&b)[0]).abs() < 1e-9);
            prop_assert!(ma >= 0.0 && ma <= (h - 1) as f64);
        }

        #[test]
        fn kl_is_nonnegative(
            col in prop::collection::vec(-6.0f64..6.0, 12),
            mu in 0.0f64..11.0,
            sigma in 0.5f64..3.0,
        ) {
            let p = column_softmax(&LogitMap::new(12, 1, col).unwrap());
            let t = gaussian_target(&SurfaceCurve::new(vec![mu]), TargetParams::new(sigma).unwrap(), 12);
            prop_assert!(loss_l2(&p, &t).unwrap().value >= -1e-15);
        }

        #[test]
        fn target_mean_recovers_interior_positions(mu in 8.0f64..56.0, sigma in 0.5f64..2.0) {
            let t = gaussian_target(&SurfaceCurve::new(vec![mu]), TargetParams::new(sigma).unwrap(), 64);
            prop_assert!((expected_position(&t).positions()[0] - mu).abs() < 0.02);
        }
    }
}
