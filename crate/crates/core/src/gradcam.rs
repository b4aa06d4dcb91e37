//! Per-class Grad-CAM heat maps.
//!
//! For class `c` the channel weights are the spatial mean of the logit
//! gradient, `α_k = mean_ij ∂y_c/∂A_k(i,j)`, and the raw map is
//! `ReLU(Σ_k α_k · A_k)`. Raw maps are scaled to a peak of 1 and resampled to
//! the input resolution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{Model, Prediction};
use crate::tensor::Tensor;

/// A dense H×W grid of `f32`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "grid {height}×{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

/// `L_c` at input resolution, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub class_index: usize,
    pub grid: Grid,
}

/// Spatial mean of each gradient channel.
pub fn alpha_weights(grad_field: &Tensor) -> Result<Vec<f32>> {
    let (k, h, w) = grad_field.chw()?;
    let z = (h * w) as f32;
    Ok((0..k)
        .map(|c| grad_field.data()[c * h * w..(c + 1) * h * w].iter().sum::<f32>() / z)
        .collect())
}

/// `ReLU(Σ_k α_k A_k)` per cell.
pub fn raw_heatmap(alpha: &[f32], feature_maps: &Tensor) -> Result<Grid> {
    let (k, h, w) = feature_maps.chw()?;
    if alpha.len() != k {
        return Err(Error::shape(format!("{} channel weights for {k} feature maps", alpha.len())));
    }
    let plane = h * w;
    let mut acc = vec![0.0f32; plane];
    for (c, &a) in alpha.iter().enumerate() {
        for (dst, &v) in acc.iter_mut().zip(&feature_maps.data()[c * plane..(c + 1) * plane]) {
            *dst += a * v;
        }
    }
    acc.iter_mut().for_each(|v| *v = v.max(0.0));
    Grid::new(h, w, acc)
}

/// Corner-aligned bilinear resampling.
pub fn bilinear_resize(src: &Grid, height: usize, width: usize) -> Grid {
    if src.height == height && src.width == width {
        return src.clone();
    }
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        (0..n_out)
            .map(|i| {
                let pos = if n_out > 1 {
                    i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
                } else {
                    0.0
                };
                let lo = (pos.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let rows = axis(height, src.height);
    let cols = axis(width, src.width);
    let mut values = Vec::with_capacity(height * width);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = src.get(y0, x0) * (1.0 - fx) + src.get(y0, x1) * fx;
            let bottom = src.get(y1, x0) * (1.0 - fx) + src.get(y1, x1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Grid {
        height,
        width,
        values,
    }
}

fn scale_to_unit_peak(grid: &mut Grid) {
    let max = grid.max();
    if max > 0.0 {
        grid.values.iter_mut().for_each(|v| *v = (*v / max).clamp(0.0, 1.0));
    } else {
        grid.values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Max-normalizes a non-negative raw map and resamples it to `height × width`.
///
/// The resampled grid is rescaled to a peak of exactly 1, since bilinear
/// samples generally miss the raw maximum. An all-zero raw map stays zero.
pub fn normalize_and_upsample(raw: &Grid, height: usize, width: usize) -> Grid {
    let mut norm = raw.clone();
    scale_to_unit_peak(&mut norm);
    let mut up = bilinear_resize(&norm, height, width);
    scale_to_unit_peak(&mut up);
    up
}

/// Heat map for one class from a traced forward pass.
pub fn class_heatmap(model: &Model, trace: &crate::network::Trace, class: usize) -> Result<Heatmap> {
    let grad = model.grad_wrt_feature_maps(trace, class)?;
    let alpha = alpha_weights(&grad)?;
    let raw = raw_heatmap(&alpha, &trace.prediction.target_feature_maps)?;
    let [_, h, w] = model.input_shape();
    Ok(Heatmap {
        class_index: class,
        grid: normalize_and_upsample(&raw, h, w),
    })
}

/// One heat map per class, ordered by class index, plus the prediction of
/// the single forward pass they share.
pub fn heatmaps_with_prediction(model: &Model, image: &Tensor) -> Result<(Prediction, Vec<Heatmap>)> {
    let trace = model.trace(image)?;
    let maps = (0..model.num_classes())
        .map(|c| class_heatmap(model, &trace, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((trace.prediction, maps))
}

pub fn all_class_heatmaps(model: &Model, image: &Tensor) -> Result<Vec<Heatmap>> {
    Ok(heatmaps_with_prediction(model, image)?.1)
}

/// Heat map of the predicted class only.
pub fn best_class_heatmap(model: &Model, image: &Tensor) -> Result<(Prediction, Heatmap)> {
    let trace = model.trace(image)?;
    let map = class_heatmap(model, &trace, trace.prediction.best_class)?;
    Ok((trace.prediction, map))
}
