use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::png_io::read_png;
use crate::error::{Error, Result};
use crate::network::Model;
use crate::tensor::Tensor;

/// A seed image the model classifies correctly.
#[derive(Debug, Clone)]
pub struct SeedImage {
    pub id: String,
    pub pixels: Tensor,
    pub true_class: usize,
}

/// A manifest entry dropped because the model gets it wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub true_class: usize,
    pub predicted: usize,
}

/// A manifest entry that could not be decoded or evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SeedSet {
    pub seeds: Vec<SeedImage>,
    pub excluded: Vec<Exclusion>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    filename: String,
    class_index: usize,
}

/// Resolves a manifest path; a directory means `<dir>/manifest.csv`.
pub fn manifest_path(dir_or_manifest: &Path) -> PathBuf {
    if dir_or_manifest.is_dir() {
        dir_or_manifest.join("manifest.csv")
    } else {
        dir_or_manifest.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::DecodeError {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    })?;
    reader
        .deserialize::<ManifestRow>()
        .map(|row| {
            row.map(|r| (r.filename, r.class_index)).map_err(|e| Error::DecodeError {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn load_one(model: &Model, path: &Path, true_class: usize) -> Result<(Tensor, usize)> {
    model.check_class(true_class)?;
    let pixels = read_png(path)?;
    if pixels.shape() != model.input_shape() {
        return Err(Error::DecodeError {
            path: path.to_path_buf(),
            reason: format!(
                "decoded shape {:?} does not match model input {:?}",
                pixels.shape(),
                model.input_shape()
            ),
        });
    }
    let predicted = model.classify(&pixels)?;
    Ok((pixels, predicted))
}

/// Loads the manifest's images and keeps those the model classifies
/// correctly. Undecodable files are reported in `failures`, misclassified
/// ones in `excluded`.
pub fn load_seed_set(model: &Model, dir_or_manifest: impl AsRef<Path>) -> Result<SeedSet> {
    let manifest = manifest_path(dir_or_manifest.as_ref());
    let base = manifest.parent().unwrap_or(Path::new("."));
    let rows = read_manifest(&manifest)?;
    let mut set = SeedSet {
        seeds: Vec::new(),
        excluded: Vec::new(),
        failures: Vec::new(),
    };
    for (filename, true_class) in rows {
        match load_one(model, &base.join(&filename), true_class) {
            Ok((pixels, predicted)) if predicted == true_class => set.seeds.push(SeedImage {
                id: filename,
                pixels,
                true_class,
            }),
            Ok((_, predicted)) => {
                log::warn!("excluding seed {filename}: labelled {true_class}, predicted {predicted}");
                set.excluded.push(Exclusion {
                    id: filename,
                    true_class,
                    predicted,
                });
            }
            Err(e) => {
                log::warn!("skipping seed {filename}: {e}");
                set.failures.push(SeedFailure {
                    id: filename,
                    error: e.to_string(),
                });
            }
        }
    }
    if set.seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    Ok(set)
}
