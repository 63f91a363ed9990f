//! Strict image decoding for ingest.
//!
//! The JPEG decoder pads a truncated scan with gray instead of failing, so a
//! damaged file would otherwise be embedded as if it were whole.

use image::{DynamicImage, ImageFormat};

const SOS: [u8; 2] = [0xFF, 0xDA];
const EOI: [u8; 2] = [0xFF, 0xD9];

/// Decode `bytes`, rejecting JPEGs whose final scan is not terminated.
pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if format == ImageFormat::Jpeg && !jpeg_is_complete(bytes) {
        return Err("truncated JPEG: no end-of-image marker after the last scan".into());
    }
    image::load_from_memory_with_format(bytes, format).map_err(|e| e.to_string())
}

// Entropy-coded data byte-stuffs 0xFF, so these markers cannot occur inside a scan.
fn jpeg_is_complete(bytes: &[u8]) -> bool {
    let last = |marker: [u8; 2]| bytes.windows(2).rposition(|w| w == marker);
    match (last(SOS), last(EOI)) {
        (Some(sos), Some(eoi)) => eoi > sos,
        _ => false,
    }
}
