//! Loading the system under test and its seed images.

mod format;
mod png_io;
mod seeds;

pub use format::{decode_model, encode_model, encode_parts, load_model, write_model, MAGIC_PREFIX, VERSION};
pub use png_io::{
    encode_gray_png, encode_image_png, encode_mask_png, read_png, to_u8, write_gray_png, write_image_png, write_mask_png,
};
pub use seeds::{load_seed_set, manifest_path, read_manifest, Exclusion, SeedFailure, SeedImage, SeedSet};
