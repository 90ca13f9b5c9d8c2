//! Colored overlay of a label map with a burned-in legend.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluator::LabelMap;
use crate::label_png;

const ALPHA: f32 = 0.5;
const BACKGROUND: u8 = 128;
const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

/// Color for palette entry `i`, built by interleaving the bits of `i`.
pub fn palette_color(i: u32) -> [u8; 3] {
    let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
    let mut c = i;
    for j in 0..8 {
        r |= ((c & 1) as u8) << (7 - j);
        g |= (((c >> 1) & 1) as u8) << (7 - j);
        b |= (((c >> 2) & 1) as u8) << (7 - j);
        c >>= 3;
    }
    [r, g, b]
}

/// Segment `id` is drawn with palette entry `id + 1` so no segment is black.
pub fn segment_color(id: u32) -> [u8; 3] {
    palette_color(id + 1)
}

/// Load an image and resize it to `(height, width)` as packed RGB.
pub fn load_base_image(path: impl AsRef<Path>, size: (usize, usize)) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let (h, w) = size;
    let rgb = img
        .resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle)
        .to_rgb8();
    Ok(rgb.into_raw())
}

/// Blend segment colors over `base` (or mid-gray) and append a legend strip
/// listing each segment's word. Returns `(height, width, rgb)`.
pub fn overlay(map: &LabelMap, base: Option<&[u8]>) -> Result<(usize, usize, Vec<u8>)> {
    let (h, w) = map.size();
    if let Some(b) = base {
        if b.len() != h * w * 3 {
            return Err(Error::Input("base image does not match the label map size".into()));
        }
    }
    let legend: Vec<(u32, String)> = map.legend().map(|e| (e.id, e.word.clone())).collect();
    let row_h = GLYPH_H + 4;
    let strip_h = legend.len() * row_h + 4;
    let longest = legend.iter().map(|(_, word)| word.chars().count()).max().unwrap_or(0);
    let strip_w = 4 + row_h + 4 + longest * (GLYPH_W + 1) + 4;
    let out_w = w.max(strip_w);
    let out_h = h + strip_h;
    let mut rgb = vec![255u8; out_h * out_w * 3];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let color = segment_color(map.ids()[i]);
            let o = (y * out_w + x) * 3;
            for c in 0..3 {
                let under = base.map_or(BACKGROUND, |b| b[i * 3 + c]) as f32;
                rgb[o + c] = (ALPHA * color[c] as f32 + (1.0 - ALPHA) * under).round() as u8;
            }
        }
    }
    for (row, (id, word)) in legend.iter().enumerate() {
        let top = h + 4 + row * row_h;
        let swatch = segment_color(*id);
        fill(&mut rgb, out_w, (top, 4), (GLYPH_H + 2, GLYPH_H + 2), swatch);
        draw_text(&mut rgb, out_w, (top + 1, 4 + row_h + 4), word);
    }
    Ok((out_h, out_w, rgb))
}

/// Render and write the overlay PNG.
pub fn write_overlay(path: impl AsRef<Path>, map: &LabelMap, base: Option<&[u8]>) -> Result<()> {
    let (h, w, rgb) = overlay(map, base)?;
    label_png::write_rgb8(path, (h, w), &rgb)
}

fn fill(rgb: &mut [u8], stride: usize, (top, left): (usize, usize), (h, w): (usize, usize), color: [u8; 3]) {
    for y in top..top + h {
        for x in left..left + w {
            let o = (y * stride + x) * 3;
            rgb[o..o + 3].copy_from_slice(&color);
        }
    }
}

fn draw_text(rgb: &mut [u8], stride: usize, (top, left): (usize, usize), text: &str) {
    for (n, ch) in text.chars().enumerate() {
        let rows = glyph(ch);
        let x0 = left + n * (GLYPH_W + 1);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - dx)) != 0 {
                    let o = ((top + dy) * stride + x0 + dx) * 3;
                    rgb[o..o + 3].fill(0);
                }
            }
        }
    }
}

fn glyph(ch: char) -> [u8; GLYPH_H] {
    let ch = ch.to_ascii_uppercase();
    match ch {
        'A'..='Z' => LETTERS[(ch as u8 - b'A') as usize],
        '0'..='9' => DIGITS[(ch as u8 - b'0') as usize],
        ' ' => [0; GLYPH_H],
        '-' => [0, 0, 0, 0b11111, 0, 0, 0],
        '_' => [0, 0, 0, 0, 0, 0, 0b11111],
        '.' => [0, 0, 0, 0, 0, 0b01100, 0b01100],
        _ => [0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111],
    }
}

const LETTERS: [[u8; GLYPH_H]; 26] = [
    [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
    [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
    [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
    [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
    [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
    [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
    [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
    [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
    [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
    [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001],
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
    [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
    [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
    [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
    [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
    [0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
];

const DIGITS: [[u8; GLYPH_H]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];
