//! Low-resolution JPEG derivatives for the result grid.

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::DynamicImage;

pub const JPEG_QUALITY: u8 = 80;

/// Size that fits within `max_dim` on the longest side, preserving the
/// aspect ratio. Images already small enough keep their size.
pub fn fit_within(width: u32, height: u32, max_dim: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_dim {
        return (width, height);
    }
    let scale = |side: u32| {
        let scaled = (u64::from(side) * u64::from(max_dim) + u64::from(longest) / 2) / u64::from(longest);
        (scaled as u32).max(1)
    };
    if width >= height {
        (max_dim, scale(height))
    } else {
        (scale(width), max_dim)
    }
}

/// Encode `image` as a thumbnail JPEG (quality 80).
pub fn encode_thumbnail(image: &DynamicImage, max_dim: u32) -> Result<Vec<u8>, image::ImageError> {
    let (w, h) = fit_within(image.width(), image.height(), max_dim);
    let resized;
    let source = if (w, h) == (image.width(), image.height()) {
        image
    } else {
        resized = image.resize_exact(w, h, FilterType::Triangle);
        &resized
    };
    let rgb = source.to_rgb8();
    let mut out = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut out, JPEG_QUALITY).encode_image(&rgb)?;
    Ok(out.into_inner())
}

/// Write a thumbnail for `image` to `out_path`, creating parent directories.
pub fn make_thumbnail(image: &DynamicImage, max_dim: u32, out_path: &Path) -> Result<(u32, u32), String> {
    let bytes = encode_thumbnail(image, max_dim).map_err(|e| e.to_string())?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    dce_core::write_atomic(out_path, &bytes).map_err(|e| format!("{}: {e}", out_path.display()))?;
    Ok(fit_within(image.width(), image.height(), max_dim))
}
