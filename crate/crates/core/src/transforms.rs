//! Region-local metamorphic transforms and the random-region baseline.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::RectRegion;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Invert,
    Hole,
    Brightness,
    Blur,
    GaussianNoise,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Invert,
        TransformKind::Hole,
        TransformKind::Brightness,
        TransformKind::Blur,
        TransformKind::GaussianNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Invert => "invert",
            TransformKind::Hole => "hole",
            TransformKind::Brightness => "brightness",
            TransformKind::Blur => "blur",
            TransformKind::GaussianNoise => "gaussian_noise",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transform {s:?}")))
    }
}

/// Magnitudes shared by every transform of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformParams {
    /// Multiplier applied by `brightness`.
    pub brightness_factor: f32,
    pub blur_sigma: f32,
    /// Odd Gaussian kernel width for `blur`.
    pub blur_kernel: usize,
    /// Standard deviation of `gaussian_noise`, in [0,1] pixel units.
    pub noise_sigma: f32,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            brightness_factor: 1.5,
            blur_sigma: 2.0,
            blur_kernel: 5,
            noise_sigma: 0.1,
        }
    }
}

impl TransformParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.brightness_factor > 0.0 && self.brightness_factor.is_finite()) {
            return Err(Error::InvalidArgument("brightness_factor must be positive".into()));
        }
        if self.blur_kernel < 3 || self.blur_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument("blur_kernel must be odd and at least 3".into()));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidArgument("blur_sigma must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub params: TransformParams,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        Self {
            kind,
            params: TransformParams::default(),
        }
    }
}

/// Normalized 1-D Gaussian weights of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f32) -> Vec<f64> {
    let r = (size / 2) as f64;
    let s2 = 2.0 * (sigma as f64).powi(2);
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - r).powi(2) / s2).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable blur of one channel's rectangle, reading only in-rectangle
/// pixels (coordinates clamped to the rectangle's edges).
fn blur_rect(plane: &mut [f32], width: usize, rect: &RectRegion, kernel: &[f64]) {
    let r = kernel.len() / 2;
    let (h, w) = (rect.height, rect.width);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let px = |y: usize, x: usize| plane[(rect.top + y) * width + rect.left + x] as f64;
    let mut horiz = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            horiz[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * px(y, clamp(x as isize + i as isize - r as isize, w)))
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * horiz[clamp(y as isize + i as isize - r as isize, h) * w + x])
                .sum();
            plane[(rect.top + y) * width + rect.left + x] = (v as f32).clamp(0.0, 1.0);
        }
    }
}

/// Applies `spec` inside `rect`; every pixel outside is left bit-identical.
/// `rng` is only drawn from by `gaussian_noise`.
pub fn apply_transform<R: Rng + ?Sized>(image: &Tensor, rect: &RectRegion, spec: &TransformSpec, rng: &mut R) -> Result<Tensor> {
    let (channels, h, w) = image.chw()?;
    if !rect.fits(h, w) {
        return Err(Error::RectOutOfBounds(format!("{rect:?} in a {h}×{w} image")));
    }
    spec.params.validate()?;
    let mut out = image.clone();
    let data = out.data_mut();
    let p = &spec.params;
    let kernel = (spec.kind == TransformKind::Blur).then(|| gaussian_kernel(p.blur_kernel, p.blur_sigma));
    let noise = match spec.kind {
        TransformKind::GaussianNoise if p.noise_sigma > 0.0 => {
            Some(Normal::new(0.0f64, p.noise_sigma as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        }
        _ => None,
    };
    for c in 0..channels {
        let plane = &mut data[c * h * w..(c + 1) * h * w];
        if let Some(k) = &kernel {
            blur_rect(plane, w, rect, k);
            continue;
        }
        for y in rect.top..rect.bottom() {
            for v in &mut plane[y * w + rect.left..y * w + rect.right()] {
                *v = match spec.kind {
                    TransformKind::Invert => 1.0 - *v,
                    TransformKind::Hole => 0.0,
                    TransformKind::Brightness => (*v * p.brightness_factor).clamp(0.0, 1.0),
                    TransformKind::GaussianNoise => match &noise {
                        Some(n) => (*v + n.sample(rng) as f32).clamp(0.0, 1.0),
                        None => *v,
                    },
                    TransformKind::Blur => unreachable!("handled above"),
                };
            }
        }
    }
    Ok(out)
}

/// `count` rectangles whose anchors are drawn uniformly, with replacement,
/// from all in-bounds top-left positions.
pub fn random_rectangles<R: Rng + ?Sized>(
    image_height: usize,
    image_width: usize,
    width: usize,
    height: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<RectRegion>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("rectangle extents must be positive".into()));
    }
    if width > image_width || height > image_height {
        return Err(Error::RectLargerThanImage {
            rect_h: height,
            rect_w: width,
            img_h: image_height,
            img_w: image_width,
        });
    }
    Ok((0..count)
        .map(|_| RectRegion {
            top: rng.gen_range(0..=image_height - height),
            left: rng.gen_range(0..=image_width - width),
            height,
            width,
        })
        .collect())
}
