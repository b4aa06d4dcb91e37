//! Forward kernels for the supported layer repertoire and the backward
//! kernels needed to carry a logit gradient down to a convolutional layer.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output extent of a convolution along one axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("convolution stride must be positive"));
    }
    let padded = input + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(Error::shape(format!(
            "kernel extent {kernel} does not fit padded input extent {padded}"
        )));
    }
    let span = padded - kernel;
    if !span.is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "(input {input} + 2·{padding} − kernel {kernel}) is not divisible by stride {stride}"
        )));
    }
    Ok(span / stride + 1)
}

/// Range of output positions `o` for which `o·stride + k − padding` lands
/// inside `[0, input)`.
#[inline]
fn valid_outputs(out: usize, input: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    // o·stride + k − padding ≤ input − 1
    let hi = if input + padding > k {
        ((input + padding - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kernels: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(
    input_shape: &[usize],
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let [channels, height, width] = input_shape[..] else {
        return Err(Error::shape(format!("conv input must be C×H×W, got {input_shape:?}")));
    };
    let [kernels, wc, kh, kw] = weights.shape()[..] else {
        return Err(Error::shape(format!(
            "conv weights must be K×C×kh×kw, got {:?}",
            weights.shape()
        )));
    };
    if wc != channels {
        return Err(Error::shape(format!(
            "conv weights expect {wc} input channels, input has {channels}"
        )));
    }
    let oh = conv_output_dim(height, kh, stride, padding)?;
    let ow = conv_output_dim(width, kw, stride, padding)?;
    Ok(ConvGeometry {
        channels,
        height,
        width,
        kernels,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Zero-padded 2-D cross-correlation: `K×C×kh×kw` weights over a `C×H×W` input.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input.shape(), weights, stride, padding)?;
    if bias.len() != g.kernels {
        return Err(Error::shape(format!(
            "conv bias has {} entries for {} kernels",
            bias.len(),
            g.kernels
        )));
    }
    let x = input.data();
    let w = weights.data();
    let plane_len = g.oh * g.ow;
    let mut out = vec![0.0f32; g.kernels * plane_len];
    for (k, plane) in out.chunks_exact_mut(plane_len).enumerate() {
        plane.fill(bias[k]);
        for c in 0..g.channels {
            let src = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ky in 0..g.kh {
                let (oy_lo, oy_hi) = valid_outputs(g.oh, g.height, ky, stride, padding);
                for kx in 0..g.kw {
                    let wv = w[((k * g.channels + c) * g.kh + ky) * g.kw + kx];
                    let (ox_lo, ox_hi) = valid_outputs(g.ow, g.width, kx, stride, padding);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let row = &src[iy * g.width..(iy + 1) * g.width];
                        let dst = &mut plane[oy * g.ow..(oy + 1) * g.ow];
                        if stride == 1 {
                            let shift = kx as isize - padding as isize;
                            let ix_lo = (ox_lo as isize + shift) as usize;
                            let ix_hi = (ox_hi as isize + shift) as usize;
                            for (d, s) in dst[ox_lo..ox_hi].iter_mut().zip(&row[ix_lo..ix_hi]) {
                                *d += wv * s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[ox] += wv * row[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.kernels, g.oh, g.ow], out)
}

/// Gradient of a convolution's output with respect to its input.
pub fn conv2d_backward_input(
    grad_output: &Tensor,
    weights: &Tensor,
    input_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input_shape, weights, stride, padding)?;
    if grad_output.shape() != [g.kernels, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv output gradient has shape {:?}, expected {:?}",
            grad_output.shape(),
            [g.kernels, g.oh, g.ow]
        )));
    }
    let go = grad_output.data();
    let w = weights.data();
    let mut grad = vec![0.0f32; g.channels * g.height * g.width];
    for k in 0..g.kernels {
        let gplane = &go[k * g.oh * g.ow..(k + 1) * g.oh * g.ow];
        for c in 0..g.channels {
            let dst = &mut grad[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ky in 0..g.kh {
                let (oy_lo, oy_hi) = valid_outputs(g.oh, g.height, ky, stride, padding);
                for kx in 0..g.kw {
                    let wv = w[((k * g.channels + c) * g.kh + ky) * g.kw + kx];
                    let (ox_lo, ox_hi) = valid_outputs(g.ow, g.width, kx, stride, padding);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        for ox in ox_lo..ox_hi {
                            dst[iy * g.width + ox * stride + kx - padding] += wv * gplane[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), grad)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` by the sign pattern of a ReLU's output.
pub fn relu_backward(grad: &mut [f32], relu_output: &[f32]) {
    for (g, &y) in grad.iter_mut().zip(relu_output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Result of a 2×2 max pool: the pooled tensor plus, for every output cell,
/// the flat index of the input element that won the window.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2×2 max pool with stride 2. A trailing odd row or column is dropped and
/// ties go to the first element in row-major window order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<Pooled> {
    let (c, h, w) = input.chw()?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("max pool needs H, W ≥ 2, got {h}×{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input element recorded in `argmax`.
pub fn maxpool2x2_backward(grad_output: &[f32], argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_output.len() != argmax.len() {
        return Err(Error::shape("max pool gradient and argmax lengths differ"));
    }
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let g = grad.data_mut();
    for (&go, &idx) in grad_output.iter().zip(argmax) {
        g[idx] += go;
    }
    Ok(grad)
}

/// `weights · input + bias` for an `m×n` weight matrix.
pub fn dense_forward(input: &[f32], weights: &Tensor, bias: &[f32]) -> Result<Vec<f32>> {
    let [m, n] = weights.shape()[..] else {
        return Err(Error::shape(format!("dense weights must be m×n, got {:?}", weights.shape())));
    };
    if input.len() != n || bias.len() != m {
        return Err(Error::shape(format!(
            "dense layer {m}×{n} got input of length {} and bias of length {}",
            input.len(),
            bias.len()
        )));
    }
    Ok(weights
        .data()
        .chunks_exact(n)
        .zip(bias)
        .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f32>() + b)
        .collect())
}

/// Gradient of a dense layer's output with respect to its input.
pub fn dense_backward_input(grad_output: &[f32], weights: &Tensor) -> Result<Vec<f32>> {
    let [m, n] = weights.shape()[..] else {
        return Err(Error::shape("dense weights must be m×n"));
    };
    if grad_output.len() != m {
        return Err(Error::shape("dense output gradient length differs from row count"));
    }
    let mut grad = vec![0.0f32; n];
    for (row, &go) in weights.data().chunks_exact(n).zip(grad_output) {
        if go == 0.0 {
            continue;
        }
        for (g, w) in grad.iter_mut().zip(row) {
            *g += w * go;
        }
    }
    Ok(grad)
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
