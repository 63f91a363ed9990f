//! PDF page rasterization.

use hayro::hayro_interpret::InterpreterSettings;
use hayro::hayro_syntax::{LoadPdfError, Pdf};
use hayro::vello_cpu::color::palette::css::WHITE;
use hayro::{PixmapSettings, RenderCache, RenderSettings};
use image::RgbImage;

/// Largest rendered side in pixels; oversized pages are scaled down to fit.
pub const MAX_RENDER_SIDE: f32 = 10_000.0;

/// Number of pages, or why the file cannot be opened.
pub fn page_count(bytes: &[u8]) -> Result<usize, String> {
    open(bytes).map(|pdf| pdf.pages().len())
}

fn open(bytes: &[u8]) -> Result<Pdf, String> {
    Pdf::new(bytes.to_vec()).map_err(|e| match e {
        LoadPdfError::Decryption(_) => "encrypted PDF".to_string(),
        LoadPdfError::Invalid => "not a readable PDF".to_string(),
    })
}

/// Render every page at `dpi` onto a white background and hand each one to
/// `on_page` with its 1-based number. Stops at the first error.
pub fn render_pages<E>(
    bytes: &[u8],
    dpi: u32,
    mut on_page: impl FnMut(u32, RgbImage) -> Result<(), E>,
) -> Result<Result<(), E>, String> {
    let pdf = open(bytes)?;
    let cache = RenderCache::new();
    let interpreter = InterpreterSettings::default();
    let render = RenderSettings::default();
    for (index, page) in pdf.pages().iter().enumerate() {
        let (w_pt, h_pt) = page.render_dimensions();
        if !(w_pt > 0.0 && h_pt > 0.0) {
            return Err(format!("page {} has an empty media box", index + 1));
        }
        let mut scale = dpi as f32 / 72.0;
        let longest = w_pt.max(h_pt) * scale;
        if longest > MAX_RENDER_SIDE {
            scale *= MAX_RENDER_SIDE / longest;
        }
        let settings = PixmapSettings {
            x_scale: scale,
            y_scale: scale,
            bg_color: WHITE,
        };
        let pixmap = hayro::render(page, &cache, &interpreter, &render, &settings);
        let (width, height) = (u32::from(pixmap.width()), u32::from(pixmap.height()));
        let rgba = pixmap.data_as_u8_slice();
        let mut rgb = Vec::with_capacity(width as usize * height as usize * 3);
        for px in rgba.chunks_exact(4) {
            rgb.extend_from_slice(&composite_on_white(px));
        }
        let image = RgbImage::from_raw(width, height, rgb)
            .ok_or_else(|| format!("page {} rendered to a malformed buffer", index + 1))?;
        if let Err(e) = on_page(index as u32 + 1, image) {
            return Ok(Err(e));
        }
    }
    Ok(Ok(()))
}

// Premultiplied RGBA over white.
fn composite_on_white(px: &[u8]) -> [u8; 3] {
    let rest = 255 - px[3];
    [
        px[0].saturating_add(rest),
        px[1].saturating_add(rest),
        px[2].saturating_add(rest),
    ]
}
