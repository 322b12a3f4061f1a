//! File formats: images, PGM masks, RSF1 float fields and contour JSON.
//!
//! RSF1 layout: the 4 magic bytes `RSF1`, then little-endian `u32` width,
//! `u32` height and `f32` spacing, followed by `f32` samples. Scalar fields
//! store one plane; vector fields store the x plane then the y plane.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::geom::Polyline;
use crate::grid::{BinaryMask, Grid2D, Image, ScalarField, VectorField};

const MAGIC: &[u8; 4] = b"RSF1";

fn decode_image(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = Grid2D::pixels(w, h)?;
    let is_color = img.color().has_color();
    let max_val = |v: u16| v as f64 / 65535.0;
    if is_color {
        let rgb = img.to_rgb16();
        let mut planes = vec![Vec::with_capacity(w * h); 3];
        for p in rgb.pixels() {
            for c in 0..3 {
                planes[c].push(max_val(p.0[c]));
            }
        }
        Image::new(grid, planes)
    } else {
        let g = img.to_luma16();
        Image::gray(grid, g.pixels().map(|p| max_val(p.0[0])).collect())
    }
}

/// Decodes PNG or binary PNM bytes into an image with values in [0, 1].
pub fn image_from_bytes(bytes: &[u8]) -> Result<Image> {
    let format = image::guess_format(bytes).map_err(|e| Error::Format(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::Format(format!("unsupported image format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Format(e.to_string()))?;
    decode_image(img)
}

pub fn load_image(path: &Path) -> Result<Image> {
    image_from_bytes(&std::fs::read(path)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an image as PNG (8 bits per sample).
pub fn image_to_png(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.grid.width() as u32, img.grid.height() as u32);
    let dynimg = if img.channel_count() >= 3 {
        let data = (0..img.grid.len()).flat_map(|k| (0..3).map(move |c| to_u8(img.channels[c][k]))).collect();
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, data).expect("buffer size"))
    } else {
        let data = img.channels[0].iter().map(|v| to_u8(*v)).collect();
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, data).expect("buffer size"))
    };
    let mut out = Cursor::new(Vec::new());
    dynimg.write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn save_image_png(img: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, image_to_png(img)?)?;
    Ok(())
}

/// Binary 8-bit PGM with 255 for set cells.
pub fn mask_to_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.grid.width(), mask.grid.height()).into_bytes();
    out.extend(mask.bits.iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// 8-bit PGM of per-cell labels (0 = background).
pub fn labels_to_pgm(grid: Grid2D, labels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend_from_slice(labels);
    out
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    std::fs::write(path, mask_to_pgm(mask))?;
    Ok(())
}

/// Reads any grayscale image as a mask; samples above one half are set.
pub fn mask_from_bytes(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image_from_bytes(bytes)?;
    let lum = img.luminance();
    Ok(BinaryMask { grid: img.grid, bits: lum.iter().map(|v| *v > 0.5).collect() })
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    mask_from_bytes(&std::fs::read(path)?)
}

fn rsf1_bytes(grid: Grid2D, planes: &[&dyn Fn(usize) -> f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * grid.len() * planes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.spacing() as f32).to_le_bytes());
    for plane in planes {
        for k in 0..grid.len() {
            out.extend_from_slice(&(plane(k) as f32).to_le_bytes());
        }
    }
    out
}

pub fn scalar_to_rsf1(f: &ScalarField) -> Vec<u8> {
    rsf1_bytes(f.grid, &[&|k| f.values[k]])
}

pub fn vector_to_rsf1(f: &VectorField) -> Vec<u8> {
    rsf1_bytes(f.grid, &[&|k| f.values[k][0], &|k| f.values[k][1]])
}

/// Parses an RSF1 payload into its grid and planes.
pub fn rsf1_from_bytes(bytes: &[u8]) -> Result<(Grid2D, Vec<Vec<f64>>)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing RSF1 header".into()));
    }
    let word = |o: usize| [bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]];
    let w = u32::from_le_bytes(word(4)) as usize;
    let h = u32::from_le_bytes(word(8)) as usize;
    let spacing = f32::from_le_bytes(word(12)) as f64;
    let grid = Grid2D::new(w, h, spacing)?;
    let payload = &bytes[16..];
    let plane_bytes = 4 * grid.len();
    if payload.is_empty() || payload.len() % plane_bytes != 0 {
        return Err(Error::Format("RSF1 payload size does not match header".into()));
    }
    let planes = payload
        .chunks(plane_bytes)
        .map(|c| c.chunks(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect())
        .collect();
    Ok((grid, planes))
}

pub fn save_scalar(f: &ScalarField, path: &Path) -> Result<()> {
    std::fs::write(path, scalar_to_rsf1(f))?;
    Ok(())
}

pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    let (grid, mut planes) = rsf1_from_bytes(&std::fs::read(path)?)?;
    if planes.len() != 1 {
        return Err(Error::Format(format!("expected one plane, found {}", planes.len())));
    }
    Ok(ScalarField { grid, values: planes.remove(0) })
}

pub fn contour_to_json(c: &Polyline) -> String {
    serde_json::to_string(c).expect("contour serializes")
}

pub fn contour_from_json(s: &str) -> Result<Polyline> {
    let c: Polyline = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
    if c.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Format("contour has non-finite coordinates".into()));
    }
    Ok(c)
}

pub fn save_contour(c: &Polyline, path: &Path) -> Result<()> {
    std::fs::write(path, contour_to_json(c))?;
    Ok(())
}

pub fn load_contour(path: &Path) -> Result<Polyline> {
    contour_from_json(&std::fs::read_to_string(path)?)
}
