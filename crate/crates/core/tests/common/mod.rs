#![allow(dead_code)]

use std::path::{Path, PathBuf};

use srmt::model_io::{load_model, read_png};
use srmt::{Model, Tensor};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/shapes10")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixture_dir().join(rel)
}

pub fn model() -> Model {
    load_model(fixture("model.srmtw")).expect("fixture model loads")
}

/// `(filename, class_index)` rows of the fixture seed manifest.
pub fn manifest_rows() -> Vec<(String, usize)> {
    let text = std::fs::read_to_string(fixture("seeds/manifest.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (f, c) = l.split_once(',').unwrap();
            (f.to_string(), c.parse().unwrap())
        })
        .collect()
}

pub fn seed_image(name: &str) -> Tensor {
    read_png(fixture("seeds").join(name)).unwrap()
}

/// Writes a manifest with absolute paths to the given fixture seeds.
pub fn write_manifest(dir: &Path, rows: &[(String, usize)]) -> PathBuf {
    let seeds = fixture("seeds");
    let mut text = String::from("filename,class_index\n");
    for (f, c) in rows {
        text.push_str(&format!("{},{c}\n", seeds.join(f).display()));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, text).unwrap();
    path
}

pub mod oracles;
pub mod properties;
