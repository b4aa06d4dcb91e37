//! Fusing per-class heat maps into a sensitive-region mask, and enumerating
//! the rectangles anchored inside it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcam::{Grid, Heatmap};
use crate::network::Prediction;

/// How per-class heat maps are combined into one sensitivity map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Per-pixel maximum over all classes.
    Max,
    /// Per-pixel mean over all classes.
    Avg,
    /// The predicted class's map alone.
    Best,
}

impl Fusion {
    pub const ALL: [Fusion; 3] = [Fusion::Max, Fusion::Avg, Fusion::Best];

    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Max => "max",
            Fusion::Avg => "avg",
            Fusion::Best => "best",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Fusion::Max),
            "avg" => Ok(Fusion::Avg),
            "best" => Ok(Fusion::Best),
            other => Err(Error::InvalidArgument(format!("unknown selection method {other:?}"))),
        }
    }
}

/// Pixels whose fused gradient reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveMask {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<bool>,
    pub method: Fusion,
    pub threshold: f32,
}

impl SensitiveMask {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &SensitiveMask) -> bool {
        self.cells.len() == other.cells.len() && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }
}

/// An axis-aligned rectangle of pixels; its anchor is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RectRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl RectRegion {
    pub fn anchor(&self) -> (usize, usize) {
        (self.top, self.left)
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    /// Center pixel, rounding toward the anchor for even extents.
    pub fn center(&self) -> (usize, usize) {
        (self.top + (self.height - 1) / 2, self.left + (self.width - 1) / 2)
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0 && self.width > 0 && self.bottom() <= height && self.right() <= width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom()).contains(&row) && (self.left..self.right()).contains(&col)
    }
}

fn check_threshold(t: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0,1]")));
    }
    Ok(())
}

fn check_stack(heatmaps: &[Heatmap]) -> Result<(usize, usize)> {
    let first = heatmaps.first().ok_or(Error::EmptyHeatmapList)?;
    let (h, w) = (first.grid.height, first.grid.width);
    if heatmaps.iter().any(|m| m.grid.height != h || m.grid.width != w) {
        return Err(Error::shape("heat maps in one stack differ in size"));
    }
    Ok((h, w))
}

/// The fused sensitivity map for `fusion`. `best_class` is only consulted by
/// [`Fusion::Best`].
pub fn fuse(heatmaps: &[Heatmap], fusion: Fusion, best_class: usize) -> Result<Grid> {
    let (h, w) = check_stack(heatmaps)?;
    let values = match fusion {
        Fusion::Max => (0..h * w)
            .map(|i| heatmaps.iter().map(|m| m.grid.values[i]).fold(f32::NEG_INFINITY, f32::max))
            .collect(),
        Fusion::Avg => {
            let n = heatmaps.len() as f32;
            (0..h * w)
                .map(|i| heatmaps.iter().map(|m| m.grid.values[i]).sum::<f32>() / n)
                .collect()
        }
        Fusion::Best => heatmaps
            .iter()
            .find(|m| m.class_index == best_class)
            .ok_or(Error::InvalidClass {
                class: best_class,
                num_classes: heatmaps.len(),
            })?
            .grid
            .values
            .clone(),
    };
    Grid::new(h, w, values)
}

/// `{(i, j) | t ≤ map(i, j)}`.
pub fn threshold_map(map: &Grid, t: f32, method: Fusion) -> Result<SensitiveMask> {
    check_threshold(t)?;
    Ok(SensitiveMask {
        height: map.height,
        width: map.width,
        cells: map.values.iter().map(|&v| t <= v).collect(),
        method,
        threshold: t,
    })
}

pub fn max_selection(heatmaps: &[Heatmap], t: f32) -> Result<SensitiveMask> {
    threshold_map(&fuse(heatmaps, Fusion::Max, 0)?, t, Fusion::Max)
}

pub fn avg_selection(heatmaps: &[Heatmap], t: f32) -> Result<SensitiveMask> {
    threshold_map(&fuse(heatmaps, Fusion::Avg, 0)?, t, Fusion::Avg)
}

/// Thresholds the heat map of the most probable class (lowest index on ties).
pub fn best_selection(heatmaps: &[Heatmap], prediction: &Prediction, t: f32) -> Result<SensitiveMask> {
    let best = crate::ops::argmax(&prediction.probabilities);
    threshold_map(&fuse(heatmaps, Fusion::Best, best)?, t, Fusion::Best)
}

pub fn select(heatmaps: &[Heatmap], prediction: &Prediction, fusion: Fusion, t: f32) -> Result<SensitiveMask> {
    match fusion {
        Fusion::Max => max_selection(heatmaps, t),
        Fusion::Avg => avg_selection(heatmaps, t),
        Fusion::Best => best_selection(heatmaps, prediction, t),
    }
}

/// Candidate rectangles anchored (top-left) at mask pixels lying on the
/// `stride` grid. Rectangles crossing the image edge are dropped. Output is
/// row-major by anchor.
pub fn enumerate_rectangles(mask: &SensitiveMask, width: usize, height: usize, stride: usize) -> Result<Vec<RectRegion>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("rectangle extents must be positive".into()));
    }
    if width > mask.width || height > mask.height {
        return Err(Error::RectLargerThanImage {
            rect_h: height,
            rect_w: width,
            img_h: mask.height,
            img_w: mask.width,
        });
    }
    let mut out = Vec::new();
    for top in (0..=mask.height - height).step_by(stride) {
        for left in (0..=mask.width - width).step_by(stride) {
            if mask.get(top, left) {
                out.push(RectRegion {
                    top,
                    left,
                    height,
                    width,
                });
            }
        }
    }
    Ok(out)
}
