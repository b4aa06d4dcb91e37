use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::Fusion;
use crate::transforms::{TransformKind, TransformParams};

/// A region-selection strategy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BaselineRandom,
    Max,
    Avg,
    Best,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::BaselineRandom, Method::Max, Method::Avg, Method::Best];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::BaselineRandom => "baseline_random",
            Method::Max => "max",
            Method::Avg => "avg",
            Method::Best => "best",
        }
    }

    /// The fusion that selects this method's regions; `None` for the baseline.
    pub fn fusion(self) -> Option<Fusion> {
        match self {
            Method::BaselineRandom => None,
            Method::Max => Some(Fusion::Max),
            Method::Avg => Some(Fusion::Avg),
            Method::Best => Some(Fusion::Best),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_transforms() -> Vec<TransformKind> {
    TransformKind::ALL.to_vec()
}
fn default_rect() -> usize {
    10
}
fn default_threshold() -> f32 {
    0.9
}
fn default_stride() -> usize {
    5
}
fn default_baseline_samples() -> usize {
    500
}
fn default_bins() -> usize {
    20
}
fn default_min_bin_trials() -> u64 {
    30
}
fn default_baseline_gradient() -> Fusion {
    Fusion::Max
}

/// Campaign settings, read from JSON. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub model: PathBuf,
    /// Seed manifest CSV, or a directory holding `manifest.csv`.
    pub seeds: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_transforms")]
    pub transforms: Vec<TransformKind>,
    #[serde(default = "default_rect")]
    pub rect_width: usize,
    #[serde(default = "default_rect")]
    pub rect_height: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f32,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Random rectangles per seed per transform for the baseline.
    #[serde(default = "default_baseline_samples")]
    pub baseline_samples: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Keep at most this many candidates per seed per method (row-major order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub transform_params: TransformParams,
    #[serde(default = "default_bins")]
    pub num_bins: usize,
    #[serde(default = "default_min_bin_trials")]
    pub min_bin_trials: u64,
    /// Fusion map that supplies `center_gradient` for baseline trials.
    #[serde(default = "default_baseline_gradient")]
    pub baseline_gradient: Fusion,
    /// `srmt run` exits with status 3 when any method's FDR exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_threshold: Option<f64>,
}

impl CampaignConfig {
    /// Defaults for everything but the two input paths.
    pub fn new(model: impl Into<PathBuf>, seeds: impl Into<PathBuf>) -> Self {
        Self {
            model: model.into(),
            seeds: seeds.into(),
            methods: default_methods(),
            transforms: default_transforms(),
            rect_width: default_rect(),
            rect_height: default_rect(),
            threshold: default_threshold(),
            stride: default_stride(),
            baseline_samples: default_baseline_samples(),
            master_seed: 0,
            max_candidates: None,
            out_dir: None,
            transform_params: TransformParams::default(),
            num_bins: default_bins(),
            min_bin_trials: default_min_bin_trials(),
            baseline_gradient: default_baseline_gradient(),
            fail_threshold: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.model = base.join(&cfg.model);
        cfg.seeds = base.join(&cfg.seeds);
        if let Some(out) = &cfg.out_dir {
            cfg.out_dir = Some(base.join(out));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return fail("methods must not be empty".into());
        }
        if self.transforms.is_empty() {
            return fail("transforms must not be empty".into());
        }
        for (what, list) in [
            ("methods", self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>()),
            ("transforms", self.transforms.iter().map(|t| t.as_str()).collect()),
        ] {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return fail(format!("{what} contains duplicates"));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold {} outside [0,1]", self.threshold));
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.rect_width == 0 || self.rect_height == 0 {
            return fail("rectangle extents must be positive".into());
        }
        if self.num_bins == 0 {
            return fail("num_bins must be positive".into());
        }
        if let Some(t) = self.fail_threshold {
            if !(0.0..=1.0).contains(&t) {
                return fail(format!("fail_threshold {t} outside [0,1]"));
            }
        }
        self.transform_params.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn fusions_needed(&self) -> Vec<Fusion> {
        let mut f: Vec<Fusion> = self.methods.iter().filter_map(|m| m.fusion()).collect();
        if self.methods.contains(&Method::BaselineRandom) {
            f.push(self.baseline_gradient);
        }
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Fusion map that supplies `center_gradient` for `method`.
    pub fn gradient_source(&self, method: Method) -> Fusion {
        method.fusion().unwrap_or(self.baseline_gradient)
    }
}
