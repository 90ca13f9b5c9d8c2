//! Single-channel PNG I/O for label maps and ground truth.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format("png", format!("{}: {e}", path.display()))
}

/// Write a 16-bit grayscale PNG.
pub fn write_gray16(path: impl AsRef<Path>, size: (usize, usize), values: &[u16]) -> Result<()> {
    let path = path.as_ref();
    let (height, width) = size;
    assert_eq!(values.len(), height * width);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Write an 8-bit RGB PNG.
pub fn write_rgb8(path: impl AsRef<Path>, size: (usize, usize), rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let (height, width) = size;
    assert_eq!(rgb.len(), height * width * 3);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(rgb).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Read a grayscale or palette-indexed PNG as raw sample values
/// (palette indices are returned as-is, not expanded to colors).
/// Returns `(height, width, values)`.
pub fn read_single_channel(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    match frame.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => {}
        other => {
            return Err(Error::format(
                "png",
                format!("{}: expected a single-channel image, found {other:?}", path.display()),
            ))
        }
    }
    let bits = frame.bit_depth as usize;
    let stride = frame.line_size;
    let mut values = Vec::with_capacity(width * height);
    for row in buf.chunks(stride).take(height) {
        match bits {
            16 => values.extend(
                row.chunks_exact(2)
                    .take(width)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32),
            ),
            8 => values.extend(row[..width].iter().map(|&b| b as u32)),
            1 | 2 | 4 => {
                let per_byte = 8 / bits;
                let mask = (1u32 << bits) - 1;
                for x in 0..width {
                    let byte = row[x / per_byte] as u32;
                    let shift = 8 - bits * (x % per_byte + 1);
                    values.push((byte >> shift) & mask);
                }
            }
            _ => return Err(png_err(path, format!("unsupported bit depth {bits}"))),
        }
    }
    Ok((height, width, values))
}
