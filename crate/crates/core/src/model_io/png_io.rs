//! PNG decoding of seed images and PNG exports of heat maps, masks and
//! follow-up images.

use std::fs::{self, File};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::DecodeError {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes an 8-bit grayscale or RGB PNG into a C×H×W tensor scaled to [0,1].
pub fn read_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| decode_err(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(decode_err(path, format!("unsupported color type {other:?}"))),
    };
    let (h, w) = (info.height as usize, info.width as usize);
    let bytes = &buf[..info.buffer_size()];
    let mut data = vec![0.0f32; channels * h * w];
    for y in 0..h {
        let row = &bytes[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            for c in 0..channels {
                data[(c * h + y) * w + x] = row[x * channels + c] as f32 / 255.0;
            }
        }
    }
    Tensor::new(vec![channels, h, w], data)
}

/// `round_half_up(v · 255)` with `v` clamped to [0,1].
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode_raw(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    // Encoding into memory with a matching buffer size cannot fail.
    let mut writer = enc.write_header().expect("png header");
    writer.write_image_data(data).expect("png data");
    writer.finish().expect("png finish");
    out
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub(crate) fn write_file_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(path, e)
        })
}

/// 8-bit grayscale PNG of an H×W grid of values in [0,1].
pub fn encode_gray_png(height: usize, width: usize, values: &[f32]) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::shape("grid length does not match height × width"));
    }
    let data: Vec<u8> = values.iter().map(|&v| to_u8(v)).collect();
    Ok(encode_raw(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &data))
}

/// 1-bit grayscale PNG; set pixels are white.
pub fn encode_mask_png(height: usize, width: usize, mask: &[bool]) -> Result<Vec<u8>> {
    if mask.len() != height * width {
        return Err(Error::shape("mask length does not match height × width"));
    }
    let stride = width.div_ceil(8);
    let mut data = vec![0u8; stride * height];
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                data[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    Ok(encode_raw(width, height, png::ColorType::Grayscale, png::BitDepth::One, &data))
}

/// 8-bit PNG of a 1- or 3-channel image tensor in [0,1].
pub fn encode_image_png(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.chw()?;
    let color = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(Error::shape(format!("cannot write a {c}-channel image as PNG"))),
    };
    let mut data = vec![0u8; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(y * w + x) * c + ch] = to_u8(image.at3(ch, y, x));
            }
        }
    }
    Ok(encode_raw(w, h, color, png::BitDepth::Eight, &data))
}

pub fn write_gray_png(path: impl AsRef<Path>, height: usize, width: usize, values: &[f32]) -> Result<()> {
    write_file_atomically(path.as_ref(), &encode_gray_png(height, width, values)?)
}

pub fn write_mask_png(path: impl AsRef<Path>, height: usize, width: usize, mask: &[bool]) -> Result<()> {
    write_file_atomically(path.as_ref(), &encode_mask_png(height, width, mask)?)
}

pub fn write_image_png(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    write_file_atomically(path.as_ref(), &encode_image_png(image)?)
}
