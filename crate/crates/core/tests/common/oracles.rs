//! Independent reference implementations used as test oracles. Everything
//! here works in f64 straight from the model descriptor and weight blob and
//! shares no code with the engine's kernels.

use rand::seq::index::sample;
use rand::Rng;
use srmt::network::{Activation, LayerSpec};
use srmt::{Model, Tensor};

/// Naive f64 evaluation of layers `from..` on a C×H×W (or flat) input.
pub fn reference_forward(model: &Model, from: usize, mut x: Vec<f64>, mut shape: Vec<usize>) -> Vec<f64> {
    let blob = model.blob();
    let take = |off: usize, len: usize| -> Vec<f64> { blob[off..off + len].iter().map(|&v| v as f64).collect() };
    for layer in &model.spec().layers[from..] {
        match layer {
            LayerSpec::Conv2d {
                activation,
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
                weights,
                bias,
            } => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                assert_eq!(c, *in_channels);
                let w_ = take(weights.offset, weights.len);
                let b_ = take(bias.offset, bias.len);
                let oh = (h + 2 * padding - kernel_h) / stride + 1;
                let ow = (w + 2 * padding - kernel_w) / stride + 1;
                let mut y = vec![0.0; out_channels * oh * ow];
                for k in 0..*out_channels {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut s = b_[k];
                            for ci in 0..c {
                                for ky in 0..*kernel_h {
                                    for kx in 0..*kernel_w {
                                        let yy = (i * stride + ky) as isize - *padding as isize;
                                        let xx = (j * stride + kx) as isize - *padding as isize;
                                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                            continue;
                                        }
                                        let wv = w_[((k * c + ci) * kernel_h + ky) * kernel_w + kx];
                                        s += wv * x[(ci * h + yy as usize) * w + xx as usize];
                                    }
                                }
                            }
                            if *activation == Activation::Relu {
                                s = s.max(0.0);
                            }
                            y[(k * oh + i) * ow + j] = s;
                        }
                    }
                }
                x = y;
                shape = vec![*out_channels, oh, ow];
            }
            LayerSpec::Maxpool2x2 => {
                let (c, h, w) = (shape[0], shape[1] / 2, shape[2] / 2);
                let iw = shape[2];
                let ih = shape[1];
                let mut y = vec![f64::NEG_INFINITY; c * h * w];
                for k in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let v = x[(k * ih + 2 * i + dy) * iw + 2 * j + dx];
                                let o = &mut y[(k * h + i) * w + j];
                                *o = o.max(v);
                            }
                        }
                    }
                }
                x = y;
                shape = vec![c, h, w];
            }
            LayerSpec::Flatten => shape = vec![x.len()],
            LayerSpec::Dense {
                activation,
                in_features,
                out_features,
                weights,
                bias,
            } => {
                assert_eq!(x.len(), *in_features);
                let w_ = take(weights.offset, weights.len);
                let b_ = take(bias.offset, bias.len);
                x = (0..*out_features)
                    .map(|r| {
                        let s = b_[r] + (0..*in_features).map(|c| w_[r * in_features + c] * x[c]).sum::<f64>();
                        if *activation == Activation::Relu {
                            s.max(0.0)
                        } else {
                            s
                        }
                    })
                    .collect();
                shape = vec![*out_features];
            }
        }
    }
    x
}

fn target_logits(model: &Model, a: &[f64]) -> Vec<f64> {
    reference_forward(model, model.target_layer() + 1, a.to_vec(), model.target_shape().to_vec())
}

fn central_difference(model: &Model, a: &[f64], idx: usize, class: usize, eps: f64) -> f64 {
    let mut p = a.to_vec();
    p[idx] += eps;
    let mut m = a.to_vec();
    m[idx] -= eps;
    (target_logits(model, &p)[class] - target_logits(model, &m)[class]) / (2.0 * eps)
}

/// Largest relative error between the analytic gradient field and central
/// differences (ε = 1e-3) over `cells` random target cells, for every class.
pub fn gradient_check<R: Rng>(model: &Model, image: &Tensor, cells: usize, rng: &mut R) -> f64 {
    let trace = model.trace(image).unwrap();
    let a: Vec<f64> = trace.prediction.target_feature_maps.data().iter().map(|&v| v as f64).collect();
    let picked = sample(rng, a.len(), cells.min(a.len())).into_vec();
    let mut worst = 0.0f64;
    for class in 0..model.num_classes() {
        let g = model.grad_wrt_feature_maps(&trace, class).unwrap();
        for &idx in &picked {
            let fd = central_difference(model, &a, idx, class, 1e-3);
            let an = g.data()[idx] as f64;
            let scale = fd.abs().max(an.abs());
            let rel = if scale < 1e-9 { 0.0 } else { (fd - an).abs() / scale };
            worst = worst.max(rel);
        }
    }
    worst
}

/// Corner-aligned bilinear resampling, written out directly.
pub fn bilinear(src: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let coord = |i: usize, n: usize, tn: usize| -> f64 {
        if tn == 1 || n == 1 {
            0.0
        } else {
            i as f64 * (n - 1) as f64 / (tn - 1) as f64
        }
    };
    let mut out = vec![0.0; th * tw];
    for i in 0..th {
        let y = coord(i, h, th);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f64;
        for j in 0..tw {
            let x = coord(j, w, tw);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f64;
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out[i * tw + j] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// End-to-end Grad-CAM heat map with the gradient field from finite
/// differences: α by spatial mean, ReLU of the weighted channel sum,
/// max-normalization, bilinear resampling to the input size and rescaling to
/// a unit peak.
pub fn finite_difference_heatmap(model: &Model, image: &Tensor, class: usize) -> Vec<f64> {
    let trace = model.trace(image).unwrap();
    let a: Vec<f64> = trace.prediction.target_feature_maps.data().iter().map(|&v| v as f64).collect();
    let (k, h, w) = {
        let s = model.target_shape();
        (s[0], s[1], s[2])
    };
    let grad: Vec<f64> = (0..a.len()).map(|i| central_difference(model, &a, i, class, 1e-3)).collect();
    let alpha: Vec<f64> = (0..k)
        .map(|c| grad[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect();
    let raw: Vec<f64> = (0..h * w)
        .map(|p| (0..k).map(|c| alpha[c] * a[c * h * w + p]).sum::<f64>().max(0.0))
        .collect();
    let [_, ih, iw] = model.input_shape();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return vec![0.0; ih * iw];
    }
    let norm: Vec<f64> = raw.iter().map(|v| v / peak).collect();
    let up = bilinear(&norm, h, w, ih, iw);
    let upeak = up.iter().cloned().fold(0.0, f64::max);
    up.iter().map(|v| (v / upeak).clamp(0.0, 1.0)).collect()
}
