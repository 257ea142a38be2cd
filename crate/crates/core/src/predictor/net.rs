//! A small plain convolutional network producing one logit per pixel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{conv2d_backward, conv2d_forward, leaky_relu_backward, leaky_relu_forward};
use crate::error::{Error, Result};
use crate::geometry::BScanImage;
use crate::pmf::LogitMap;
use crate::shape::{composite_loss, CompositeLoss, LossConfig};
use crate::surface::SurfaceCurve;

/// Anything that maps a preprocessed B-scan to a same-sized logit map.
pub trait LogitPredictor {
    fn forward(&self, img: &BScanImage) -> Result<LogitMap>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetConfig {
    /// Channel count of every feature map, input first and output last.
    pub widths: Vec<usize>,
    /// Odd square kernel size.
    pub kernel: usize,
    pub negative_slope: f64,
    pub seed: u64,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            widths: vec![1, 8, 8, 1],
            kernel: 3,
            negative_slope: 0.01,
            seed: 0,
        }
    }
}

impl ToyNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths[0] != 1 || *self.widths.last().unwrap() != 1 {
            return Err(Error::Validation(format!(
                "widths must start and end with 1, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Validation("channel widths must be >= 1".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Validation(format!("kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn n_weights(&self) -> usize {
        self.out_c * self.in_c * self.kernel * self.kernel
    }
}

/// Convolution stack with leaky rectifiers between layers. All parameters
/// live in one flat vector, laid out layer by layer as weights then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    config: ToyNetConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
struct ForwardCache {
    /// Input to every layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of every hidden layer.
    pre: Vec<Vec<f64>>,
}

impl ToyNet {
    fn layout(config: &ToyNetConfig) -> (Vec<LayerShape>, usize) {
        let k = config.kernel;
        let mut off = 0;
        let layers = config
            .widths
            .windows(2)
            .map(|w| {
                let weight_offset = off;
                off += w[1] * w[0] * k * k;
                let bias_offset = off;
                off += w[1];
                LayerShape {
                    in_c: w[0],
                    out_c: w[1],
                    kernel: k,
                    weight_offset,
                    bias_offset,
                }
            })
            .collect();
        (layers, off)
    }

    /// He-normal weights drawn from `config.seed`, zero biases.
    pub fn new(config: ToyNetConfig) -> Result<Self> {
        config.validate()?;
        let (layers, n) = Self::layout(&config);
        let mut params = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for l in &layers {
            let fan_in = (l.in_c * l.kernel * l.kernel) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for p in &mut params[l.weight_offset..l.weight_offset + l.n_weights()] {
                *p = normal.sample(&mut rng);
            }
        }
        Ok(ToyNet { config, layers, params })
    }

    pub fn zeros(config: ToyNetConfig) -> Result<Self> {
        config.validate()?;
        let (layers, n) = Self::layout(&config);
        Ok(ToyNet {
            config,
            layers,
            params: vec![0.0; n],
        })
    }

    pub fn from_params(config: ToyNetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (layers, n) = Self::layout(&config);
        if params.len() != n {
            return Err(Error::Shape(format!("network needs {n} parameters, got {}", params.len())));
        }
        Ok(ToyNet { config, layers, params })
    }

    pub fn config(&self) -> &ToyNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn layer_weights(&self, i: usize) -> &[f64] {
        let l = &self.layers[i];
        &self.params[l.weight_offset..l.weight_offset + l.n_weights()]
    }

    pub fn layer_bias(&self, i: usize) -> &[f64] {
        let l = &self.layers[i];
        &self.params[l.bias_offset..l.bias_offset + l.out_c]
    }

    fn forward_cached(&self, img: &BScanImage) -> (LogitMap, ForwardCache) {
        let (rows, cols) = (img.rows(), img.cols());
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        let mut x = img.pixels().to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let out = conv2d_forward(
                &x,
                l.in_c,
                rows,
                cols,
                self.layer_weights(i),
                self.layer_bias(i),
                l.out_c,
                l.kernel,
            );
            inputs.push(x);
            if i + 1 < n {
                x = leaky_relu_forward(&out, self.config.negative_slope);
                pre.push(out);
            } else {
                x = out;
            }
        }
        let logits = LogitMap::new(rows, cols, x).expect("finite weights give finite logits");
        (logits, ForwardCache { inputs, pre })
    }

    /// Gradient of a scalar objective with respect to every parameter, given
    /// its gradient with respect to the logits.
    fn backprop(&self, cache: &ForwardCache, rows: usize, cols: usize, grad_logits: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut g = grad_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            if i + 1 < self.layers.len() {
                leaky_relu_backward(&cache.pre[i], &mut g, self.config.negative_slope);
            }
            let (gin, gw, gb) = conv2d_backward(
                &cache.inputs[i],
                l.in_c,
                rows,
                cols,
                self.layer_weights(i),
                l.out_c,
                l.kernel,
                &g,
                i > 0,
            );
            grads[l.weight_offset..l.weight_offset + gw.len()].copy_from_slice(&gw);
            grads[l.bias_offset..l.bias_offset + gb.len()].copy_from_slice(&gb);
            g = gin;
        }
        grads
    }

    /// Composite loss on one image and its gradient with respect to every parameter.
    pub fn backward(
        &self,
        img: &BScanImage,
        reference: &SurfaceCurve,
        cfg: &LossConfig,
    ) -> Result<(CompositeLoss, Vec<f64>)> {
        let (logits, cache) = self.forward_cached(img);
        let loss = composite_loss(&logits, reference, cfg)?;
        let grads = self.backprop(&cache, img.rows(), img.cols(), &loss.grad);
        Ok((loss, grads))
    }

    /// Parameter gradient of an arbitrary linear functional of the logits.
    pub fn vjp(&self, img: &BScanImage, grad_logits: &[f64]) -> Result<Vec<f64>> {
        if grad_logits.len() != img.rows() * img.cols() {
            return Err(Error::Shape("logit gradient does not match the image".into()));
        }
        let (_, cache) = self.forward_cached(img);
        Ok(self.backprop(&cache, img.rows(), img.cols(), grad_logits))
    }
}

impl LogitPredictor for ToyNet {
    fn forward(&self, img: &BScanImage) -> Result<LogitMap> {
        Ok(self.forward_cached(img).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::{column_softmax, expected_position};
    use rand::{Rng, SeedableRng};

    fn image(seed: u64, n: usize) -> BScanImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BScanImage::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn zero_net_gives_uniform_columns() {
        let net = ToyNet::zeros(ToyNetConfig::default()).unwrap();
        let z = net.forward(&image(1, 16)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let p = column_softmax(&z);
        assert!(p.values().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let net = ToyNet::new(ToyNetConfig { seed: 3, ..Default::default() }).unwrap();
        let img = BScanImage::from_fn(12, 20, |r, c| ((r * 3 + c) % 7) as f64 - 3.0);
        let a = net.forward(&img).unwrap();
        let b = net.forward(&img).unwrap();
        assert_eq!((a.rows(), a.cols()), (12, 20));
        assert_eq!(a, b);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(ToyNet::new(ToyNetConfig { widths: vec![2, 4, 1], ..Default::default() }).is_err());
        assert!(ToyNet::new(ToyNetConfig { widths: vec![1, 4, 2], ..Default::default() }).is_err());
        assert!(ToyNet::new(ToyNetConfig { kernel: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn tiny_net_gradients_match_central_differences() {
        let cfg = ToyNetConfig { widths: vec![1, 2, 1], kernel: 3, negative_slope: 0.1, seed: 7 };
        let net = ToyNet::new(cfg.clone()).unwrap();
        let img = image(8, 12);
        let reference = SurfaceCurve::from_fn(12, |x| 5.0 + 1.5 * (x as f64 / 3.0).sin());
        let loss_cfg = LossConfig { h: 3, ..Default::default() };
        let (_, analytic) = net.backward(&img, &reference, &loss_cfg).unwrap();
        let eps = 1e-5;
        for j in 0..net.n_params() {
            let eval = |d: f64| {
                let mut p = net.params().to_vec();
                p[j] += d;
                let n = ToyNet::from_params(cfg.clone(), p).unwrap();
                n.backward(&img, &reference, &loss_cfg).unwrap().0.total
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            assert!(rel_err(analytic[j], fd) < 1e-4, "param {j}: {} vs {fd}", analytic[j]);
        }
    }

    #[test]
    fn l1_gradient_vanishes_at_its_minimum() {
        let net = ToyNet::new(ToyNetConfig { seed: 2, ..Default::default() }).unwrap();
        let img = image(4, 16);
        let mu = expected_position(&column_softmax(&net.forward(&img).unwrap()));
        let cfg = LossConfig { beta: 0.0, gamma: 0.0, h: 3, ..Default::default() };
        let (loss, g) = net.backward(&img, &mu, &cfg).unwrap();
        assert_eq!(loss.l1, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_gamma_doubles_curvature_component() {
        let net = ToyNet::new(ToyNetConfig { seed: 5, ..Default::default() }).unwrap();
        let img = image(6, 16);
        let r = SurfaceCurve::from_fn(16, |x| 7.0 + 2.0 * (x as f64 / 2.5).cos());
        let base = LossConfig { h: 3, gamma: 0.0, ..Default::default() };
        let (_, g0) = net.backward(&img, &r, &base).unwrap();
        let (l1, g1) = net.backward(&img, &r, &LossConfig { gamma: 1.0, ..base }).unwrap();
        let (_, g2) = net.backward(&img, &r, &LossConfig { gamma: 2.0, ..base }).unwrap();
        let scale = g2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..g0.len() {
            let (c1, c2) = (g1[j] - g0[j], g2[j] - g0[j]);
            assert!((c2 - 2.0 * c1).abs() <= 1e-12 * scale);
        }
        let one: Vec<f64> = l1.grad_l3.iter().map(|v| 1.0 * v).collect();
        let two: Vec<f64> = l1.grad_l3.iter().map(|v| 2.0 * v).collect();
        let v1 = net.vjp(&img, &one).unwrap();
        let v2 = net.vjp(&img, &two).unwrap();
        assert!(v1.iter().any(|&v| v != 0.0));
        for (a, b) in v1.iter().zip(&v2) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
