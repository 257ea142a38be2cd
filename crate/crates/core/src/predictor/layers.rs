//! Convolution and leaky-rectifier kernels with their backward passes.
//!
//! Feature maps are channel-major `[C, H, W]` flat buffers. Convolutions are
//! stride 1 with zero padding of `k / 2`, so spatial size is preserved.
//! Weights are `[out, in, k, k]`.

/// `out[o] = bias[o] + sum_i conv(input[i], weight[o, i])`.
pub fn conv2d_forward(
    input: &[f64],
    in_c: usize,
    rows: usize,
    cols: usize,
    weight: &[f64],
    bias: &[f64],
    out_c: usize,
    k: usize,
) -> Vec<f64> {
    let plane = rows * cols;
    let pad = k / 2;
    let mut out = vec![0.0; out_c * plane];
    for o in 0..out_c {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(bias[o]);
        for i in 0..in_c {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    let w = weight[((o * in_c + i) * k + ky) * k + kx];
                    if w == 0.0 {
                        continue;
                    }
                    let (r_lo, r_hi) = valid_range(rows, ky, pad);
                    let (c_lo, c_hi) = valid_range(cols, kx, pad);
                    for r in r_lo..r_hi {
                        let sr = r + ky - pad;
                        let d = &mut dst[r * cols + c_lo..r * cols + c_hi];
                        let s = &src[sr * cols + c_lo + kx - pad..sr * cols + c_hi + kx - pad];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += w * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output indices `[lo, hi)` whose tap at offset `tap - pad` stays inside `[0, n)`.
#[inline]
fn valid_range(n: usize, tap: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(tap);
    let hi = (n + pad).saturating_sub(tap).min(n);
    (lo, hi.max(lo))
}

/// Gradients of a convolution given the gradient of its output.
/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn conv2d_backward(
    input: &[f64],
    in_c: usize,
    rows: usize,
    cols: usize,
    weight: &[f64],
    out_c: usize,
    k: usize,
    grad_out: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = rows * cols;
    let pad = k / 2;
    let mut gin = if need_input_grad { vec![0.0; in_c * plane] } else { Vec::new() };
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; out_c];
    for o in 0..out_c {
        let go = &grad_out[o * plane..(o + 1) * plane];
        gb[o] = go.iter().sum();
        for i in 0..in_c {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * in_c + i) * k + ky) * k + kx;
                    let w = weight[widx];
                    let (r_lo, r_hi) = valid_range(rows, ky, pad);
                    let (c_lo, c_hi) = valid_range(cols, kx, pad);
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let sr = r + ky - pad;
                        let g = &go[r * cols + c_lo..r * cols + c_hi];
                        let s_off = sr * cols + c_lo + kx - pad;
                        let s = &src[s_off..s_off + (c_hi - c_lo)];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if need_input_grad {
                            let gi = &mut gin[i * plane + s_off..i * plane + s_off + (c_hi - c_lo)];
                            for (d, gv) in gi.iter_mut().zip(g) {
                                *d += w * gv;
                            }
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    (gin, gw, gb)
}

pub fn leaky_relu_forward(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

/// Scales `grad` in place by the rectifier's derivative at `pre`.
pub fn leaky_relu_backward(pre: &[f64], grad: &mut [f64], slope: f64) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g *= slope;
        }
    }
}
