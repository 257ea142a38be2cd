//! Curvature of a boundary curve from wide-window finite differences, the
//! curvature-matching loss, and the weighted composite training loss.
//!
//! The stencils are deliberately unnormalized: with `k = h / 2` (integer
//! division),
//!
//! ```text
//! f'(x)  = f(x + k) - f(x - k)
//! f''(x) = -f(x + k) + 2 f(x) - f(x - k)
//! κ(x)   = |f''(x)| / (1 + f'(x)^2)^(3/2)
//! ```
//!
//! so the curvature scale depends on `h`. Columns closer than `k` to either
//! border, or touching an undefined position, have no curvature.

use crate::error::{Error, Result};
use crate::pmf::{
    column_softmax, expected_position, expected_position_backward, gaussian_target, loss_l1,
    loss_l2, LogitMap, LossGrad, TargetParams,
};
use crate::surface::SurfaceCurve;

/// Weights and shape parameters of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Odd finite-difference window, in columns.
    pub h: usize,
    pub sigma_target: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            h: 21,
            sigma_target: 1.0,
        }
    }
}

impl LossConfig {
    /// Defaults with `h` set to roughly 4% of the image width.
    pub fn for_width(width: usize) -> Self {
        LossConfig {
            h: window_for_width(width),
            ..LossConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h < 3 || self.h.is_multiple_of(2) {
            return Err(Error::Validation(format!("window h must be odd and >= 3, got {}", self.h)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        TargetParams::new(self.sigma_target)?;
        Ok(())
    }
}

/// `round(0.041 * width)`, bumped to the next odd number, at least 3.
/// Gives 21 for 512-wide images.
pub fn window_for_width(width: usize) -> usize {
    let h = (0.041 * width as f64).round() as usize;
    let h = if h.is_multiple_of(2) { h + 1 } else { h };
    h.max(3)
}

fn half_window(width: usize, h: usize) -> Result<usize> {
    if h < 3 || h.is_multiple_of(2) {
        return Err(Error::Validation(format!("window h must be odd and >= 3, got {h}")));
    }
    if width < h {
        return Err(Error::Window { window: h, width });
    }
    Ok(h / 2)
}

pub fn fd_first(f: &SurfaceCurve, h: usize) -> Result<SurfaceCurve> {
    let k = half_window(f.width(), h)?;
    let p = f.positions();
    Ok(SurfaceCurve::from_fn(f.width(), |x| {
        if x < k || x + k >= p.len() {
            return f64::NAN;
        }
        p[x + k] - p[x - k]
    }))
}

pub fn fd_second(f: &SurfaceCurve, h: usize) -> Result<SurfaceCurve> {
    let k = half_window(f.width(), h)?;
    let p = f.positions();
    Ok(SurfaceCurve::from_fn(f.width(), |x| {
        if x < k || x + k >= p.len() {
            return f64::NAN;
        }
        -p[x + k] + 2.0 * p[x] - p[x - k]
    }))
}

pub fn curvature(f: &SurfaceCurve, h: usize) -> Result<SurfaceCurve> {
    let d1 = fd_first(f, h)?;
    let d2 = fd_second(f, h)?;
    Ok(SurfaceCurve::from_fn(f.width(), |x| {
        match (d1.get(x), d2.get(x)) {
            (Some(a), Some(b)) => b.abs() / (1.0 + a * a).powf(1.5),
            _ => f64::NAN,
        }
    }))
}

/// Mean absolute difference between the curvatures of `pred` and `reference`
/// over jointly defined columns; gradient with respect to `pred`.
pub fn loss_l3(pred: &SurfaceCurve, reference: &SurfaceCurve, h: usize) -> Result<LossGrad> {
    if pred.width() != reference.width() {
        return Err(Error::Shape(format!(
            "curve widths differ: {} vs {}",
            pred.width(),
            reference.width()
        )));
    }
    let k = half_window(pred.width(), h)?;
    let kp = curvature(pred, h)?;
    let kr = curvature(reference, h)?;
    let joint: Vec<usize> = (0..pred.width())
        .filter(|&x| kp.is_valid(x) && kr.is_valid(x))
        .collect();
    if joint.is_empty() {
        return Err(Error::UndefinedLoss("no jointly defined curvature columns"));
    }
    let n = joint.len() as f64;
    let f = pred.positions();
    let mut grad = vec![0.0; pred.width()];
    let mut value = 0.0;
    for &x in &joint {
        let diff = kp.positions()[x] - kr.positions()[x];
        value += diff.abs();
        if diff == 0.0 {
            continue;
        }
        let g_kappa = diff.signum() / n;
        let d1 = f[x + k] - f[x - k];
        let d2 = -f[x + k] + 2.0 * f[x] - f[x - k];
        let base = 1.0 + d1 * d1;
        // ∂κ/∂f'' and ∂κ/∂f'
        let dk_d2 = if d2 == 0.0 { 0.0 } else { d2.signum() / base.powf(1.5) };
        let dk_d1 = -3.0 * d2.abs() * d1 / base.powf(2.5);
        let g2 = g_kappa * dk_d2;
        let g1 = g_kappa * dk_d1;
        grad[x + k] += -g2 + g1;
        grad[x] += 2.0 * g2;
        grad[x - k] += -g2 - g1;
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Composite loss value, its logit gradient, and the per-term breakdown.
///
/// Term gradients are unweighted and already pulled back onto the logits, so
/// `grad == alpha * grad_l1 + beta * grad_l2 + gamma * grad_l3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    /// Zero (and not evaluated) when `gamma == 0`.
    pub l3: f64,
    pub grad: Vec<f64>,
    pub grad_l1: Vec<f64>,
    pub grad_l2: Vec<f64>,
    pub grad_l3: Vec<f64>,
}

pub fn composite_loss(
    logits: &LogitMap,
    reference: &SurfaceCurve,
    cfg: &LossConfig,
) -> Result<CompositeLoss> {
    cfg.validate()?;
    if reference.width() != logits.cols() {
        return Err(Error::Shape(format!(
            "reference width {} does not match logit width {}",
            reference.width(),
            logits.cols()
        )));
    }
    let p = column_softmax(logits);
    let mu_hat = expected_position(&p);

    let l1 = loss_l1(&mu_hat, reference)?;
    let grad_l1 = expected_position_backward(&p, &l1.grad);

    let target = gaussian_target(reference, TargetParams::new(cfg.sigma_target)?, logits.rows());
    let l2 = loss_l2(&p, &target)?;

    let (l3_value, grad_l3) = if cfg.gamma != 0.0 {
        let l3 = loss_l3(&mu_hat, reference, cfg.h)?;
        (l3.value, expected_position_backward(&p, &l3.grad))
    } else {
        (0.0, vec![0.0; grad_l1.len()])
    };

    let grad = grad_l1
        .iter()
        .zip(&l2.grad)
        .zip(&grad_l3)
        .map(|((a, b), c)| cfg.alpha * a + cfg.beta * b + cfg.gamma * c)
        .collect();
    Ok(CompositeLoss {
        total: cfg.alpha * l1.value + cfg.beta * l2.value + cfg.gamma * l3_value,
        l1: l1.value,
        l2: l2.value,
        l3: l3_value,
        grad,
        grad_l1,
        grad_l2: l2.grad,
        grad_l3,
    })
}
