use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. Variant names are part of the CLI
/// contract: `srmt` prints [`Error::name`] so scripts can match on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("InvalidClass: class {class} out of range for {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("ModelHasNoTargetLayer: {0}")]
    ModelHasNoTargetLayer(String),

    #[error("BadMagic: file does not start with SRMTW magic")]
    BadMagic,

    #[error("UnsupportedVersion: SRMTW version {0} (expected 1)")]
    UnsupportedVersion(u8),

    #[error("ShapeChainBroken at layer {layer}: {reason}")]
    ShapeChainBroken { layer: usize, reason: String },

    #[error("TruncatedBlob at layer {layer}: {reason}")]
    TruncatedBlob { layer: usize, reason: String },

    #[error("MalformedDescriptor: {0}")]
    MalformedDescriptor(String),

    #[error("DecodeError in {path}: {reason}")]
    DecodeError { path: PathBuf, reason: String },

    #[error("EmptySeedSet: no seed image survived loading and filtering")]
    EmptySeedSet,

    #[error("EmptyHeatmapList: selection needs at least one heatmap")]
    EmptyHeatmapList,

    #[error("RectLargerThanImage: {rect_h}x{rect_w} rectangle does not fit a {img_h}x{img_w} image")]
    RectLargerThanImage {
        rect_h: usize,
        rect_w: usize,
        img_h: usize,
        img_w: usize,
    },

    #[error("RectOutOfBounds: {0}")]
    RectOutOfBounds(String),

    #[error("UndefinedForZeroTrials: FDR needs at least one trial")]
    UndefinedForZeroTrials,

    #[error("FewerThanTwoBins: {0} qualifying bin(s), correlation undefined")]
    FewerThanTwoBins(usize),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("ConfigError: {0}")]
    Config(String),

    #[error("IoError on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable identifier of the variant, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidClass { .. } => "InvalidClass",
            Error::ModelHasNoTargetLayer(_) => "ModelHasNoTargetLayer",
            Error::BadMagic => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::ShapeChainBroken { .. } => "ShapeChainBroken",
            Error::TruncatedBlob { .. } => "TruncatedBlob",
            Error::MalformedDescriptor(_) => "MalformedDescriptor",
            Error::DecodeError { .. } => "DecodeError",
            Error::EmptySeedSet => "EmptySeedSet",
            Error::EmptyHeatmapList => "EmptyHeatmapList",
            Error::RectLargerThanImage { .. } => "RectLargerThanImage",
            Error::RectOutOfBounds(_) => "RectOutOfBounds",
            Error::UndefinedForZeroTrials => "UndefinedForZeroTrials",
            Error::FewerThanTwoBins(_) => "FewerThanTwoBins",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
