//! Synthetic inputs for tests and demos.

use std::io::Cursor;
use std::io::Write as _;

use dce_core::hash::SplitMix64;
use image::{ImageFormat, Rgb, RgbImage};

/// A PDF with `pages` letter-sized pages, each with a differently colored
/// rectangle. A page count of zero yields a valid, empty document.
pub fn synthetic_pdf(pages: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut offsets = Vec::new();
    out.extend_from_slice(b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n");

    let mut object = |out: &mut Vec<u8>, body: &[u8]| {
        offsets.push(out.len());
        let num = offsets.len();
        writeln!(out, "{num} 0 obj").unwrap();
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    };

    object(&mut out, b"<< /Type /Catalog /Pages 2 0 R >>");
    let kids: Vec<String> = (0..pages).map(|i| format!("{} 0 R", 3 + 2 * i)).collect();
    object(
        &mut out,
        format!("<< /Type /Pages /Kids [{}] /Count {pages} >>", kids.join(" ")).as_bytes(),
    );
    for i in 0..pages {
        let page = format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Contents {} 0 R /Resources << >> >>",
            4 + 2 * i
        );
        object(&mut out, page.as_bytes());
        let shade = |k: usize| ((i * 37 + k * 71) % 100) as f32 / 100.0;
        let content = format!(
            "{:.2} {:.2} {:.2} rg 72 {} 468 {} re f",
            shade(0),
            shade(1),
            shade(2),
            100 + 40 * (i % 10),
            300 + 20 * (i % 7)
        );
        let stream = format!("<< /Length {} >>\nstream\n{content}\nendstream", content.len());
        object(&mut out, stream.as_bytes());
    }

    let xref_at = out.len();
    let count = offsets.len() + 1;
    write!(out, "xref\n0 {count}\n0000000000 65535 f \n").unwrap();
    for off in &offsets {
        writeln!(out, "{off:010} 00000 n ").unwrap();
    }
    write!(
        out,
        "trailer\n<< /Size {count} /Root 1 0 R >>\nstartxref\n{xref_at}\n%%EOF\n"
    )
    .unwrap();
    out
}

/// A deterministic `width`×`height` RGB test pattern derived from `seed`.
pub fn synthetic_rgb(seed: u64, width: u32, height: u32) -> RgbImage {
    let mut rng = SplitMix64::new(seed);
    let base = rng.next_u64().to_le_bytes();
    let noise_seed = rng.next_u64();
    RgbImage::from_fn(width, height, |x, y| {
        let mut px = SplitMix64::new(noise_seed ^ (u64::from(x) << 32 | u64::from(y)));
        let n = (px.next_u64() & 0x1f) as u8;
        Rgb([
            base[0].wrapping_add((x * 255 / width.max(1)) as u8).wrapping_add(n),
            base[1].wrapping_add((y * 255 / height.max(1)) as u8),
            base[2] ^ (((x / 8 + y / 8) % 2) as u8 * 0x80),
        ])
    })
}

/// Encoded bytes of [`synthetic_rgb`] in `format` (PNG, JPEG, or TIFF).
pub fn synthetic_image(seed: u64, width: u32, height: u32, format: ImageFormat) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    synthetic_rgb(seed, width, height)
        .write_to(&mut buf, format)
        .expect("in-memory encode");
    buf.into_inner()
}
