//! Sensitive-region metamorphic testing for image classifiers.
//!
//! The pipeline runs in three stages per seed image: per-class Grad-CAM heat
//! maps ([`gradcam`]), fusion of those maps into a sensitive-region mask and
//! enumeration of candidate rectangles ([`sensitivity`]), and region-local
//! metamorphic transforms judged against label invariance ([`transforms`],
//! [`campaign`]). A random-region baseline runs alongside so failure
//! detection rates can be compared.

pub mod campaign;
pub mod cli;
pub mod error;
pub mod gradcam;
pub mod model_io;
pub mod network;
pub mod ops;
pub mod rng;
pub mod sensitivity;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
pub use network::{Model, ModelSpec, Prediction};
pub use tensor::Tensor;

/// Engine version recorded in campaign reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
