//! SRMTW v1 weight files.
//!
//! Layout:
//!
//! ```text
//! 0..8     magic  "SRMTW\0\0" followed by the version byte (0x01)
//! 8..12    n: u32 little-endian, length of the descriptor
//! 12..12+n UTF-8 JSON architecture descriptor (`ModelSpec`)
//! rest     blob of little-endian f32, row-major, concatenated in layer order
//! ```
//!
//! Blob offsets in the descriptor count floats, not bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Model, ModelSpec};

pub const MAGIC_PREFIX: &[u8; 7] = b"SRMTW\0\0";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 12;

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 8 || &bytes[..7] != MAGIC_PREFIX {
        return Err(Error::BadMagic);
    }
    if bytes[7] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[7]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedDescriptor("file ends inside the header".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json_end = HEADER_LEN
        .checked_add(n)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::MalformedDescriptor(format!("descriptor length {n} runs past end of file")))?;
    let spec: ModelSpec = serde_json::from_slice(&bytes[HEADER_LEN..json_end])
        .map_err(|e| Error::MalformedDescriptor(e.to_string()))?;

    // A partial trailing float is dropped here; the layer whose range reaches
    // it is reported as truncated during validation.
    let blob: Vec<f32> = bytes[json_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if !(bytes.len() - json_end).is_multiple_of(4) {
        let whole = blob.len();
        if let Some(layer) = spec.layers.iter().position(|l| layer_end(l) > whole) {
            return Err(Error::TruncatedBlob {
                layer,
                reason: format!("blob ends mid-float after {whole} whole floats"),
            });
        }
        return Err(Error::MalformedDescriptor("blob length is not a multiple of 4 bytes".into()));
    }
    Model::from_parts(spec, blob)
}

fn layer_end(layer: &crate::network::LayerSpec) -> usize {
    use crate::network::LayerSpec::*;
    match layer {
        Conv2d { weights, bias, .. } | Dense { weights, bias, .. } => weights.end().max(bias.end()),
        Maxpool2x2 | Flatten => 0,
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Serializes a model; the inverse of [`decode_model`].
pub fn encode_model(model: &Model) -> Vec<u8> {
    encode_parts(model.spec(), model.blob())
}

pub fn encode_parts(spec: &ModelSpec, blob: &[f32]) -> Vec<u8> {
    let json = serde_json::to_vec(spec).expect("descriptor serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + 4 * blob.len());
    out.extend_from_slice(MAGIC_PREFIX);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}
