//! Grayscale PNG rendering.

use reorder_core::AdjacencyMatrix;

use crate::{Error, Result};

fn encode_gray(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Balanced);
    let mut w = enc.write_header()?;
    w.write_image_data(pixels)?;
    w.finish()?;
    Ok(out)
}

/// `(n·scale)²` pixels: edges black, non-edges white.
pub fn render_matrix(a: &AdjacencyMatrix, scale: usize) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::Invalid("scale must be at least 1".into()));
    }
    let side = a.n() * scale;
    let mut pixels = vec![255u8; side * side];
    for y in 0..side {
        for x in 0..side {
            if a.get(y / scale, x / scale) == 1 {
                pixels[y * side + x] = 0;
            }
        }
    }
    encode_gray(side, side, &pixels)
}

/// Row-major `res × res` field in `[0, 1]`, brighter = larger, each cell
/// drawn as a `scale × scale` block.
pub fn render_field(values: &[f64], res: usize, scale: usize) -> Result<Vec<u8>> {
    if scale == 0 || values.len() != res * res {
        return Err(Error::Invalid(format!(
            "field of {} values is not {res}×{res}, or scale {scale} is 0",
            values.len()
        )));
    }
    let side = res * scale;
    let mut pixels = vec![0u8; side * side];
    for y in 0..side {
        for x in 0..side {
            let v = values[(y / scale) * res + x / scale];
            pixels[y * side + x] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    encode_gray(side, side, &pixels)
}
