//! Grayscale tiles in `[0, 1]`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};

pub const TILE_SIDE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Encoding("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn to_gray(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|p| p as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => {
            g.into_raw().chunks(2).map(|p| p[0] as f64 / 255.0).collect()
        }
        DynamicImage::ImageLuma16(g) => {
            g.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect()
        }
        other => other
            .to_rgb8()
            .into_raw()
            .chunks(3)
            .map(|p| luminance(p[0], p[1], p[2]).clamp(0.0, 1.0))
            .collect(),
    };
    GrayImage::new(h, w, pixels)
}

/// Loads a PGM or PNG tile of any size. Colour pixels are reduced with
/// luminance weights `0.299 R + 0.587 G + 0.114 B`.
pub fn load_gray_image_any(path: &Path) -> Result<GrayImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Encoding(format!("{}: {e}", path.display())))?;
    to_gray(img)
}

/// Loads a tile that must be exactly [`TILE_SIDE`] pixels square.
pub fn load_gray_image(path: &Path) -> Result<GrayImage> {
    let img = load_gray_image_any(path)?;
    if (img.height, img.width) != (TILE_SIDE, TILE_SIDE) {
        return Err(Error::Dimension(format!(
            "{}: {}x{} image, expected {TILE_SIDE}x{TILE_SIDE}",
            path.display(),
            img.width,
            img.height
        )));
    }
    Ok(img)
}

/// 8-bit quantization used by every writer here.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a binary (P5) PGM.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| to_u8(v)).collect();
    write_gray_bytes(path, img.width, img.height, &bytes)
}

pub(crate) fn write_gray_bytes(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(bytes, width as u32, height as u32, image::ExtendedColorType::L8)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encoding(other.to_string()),
        })?;
    std::io::Write::flush(&mut out).map_err(|e| Error::io(path, e))
}

/// Finds `<stem>.pgm` or `<stem>.png` in `dir`.
pub fn find_tile(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["pgm", "png"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads `<id>.pgm` / `<id>.png` for every id; a join error lists all ids
/// without a file.
pub fn load_image_dir(dir: &Path, ids: &[i64]) -> Result<HashMap<i64, GrayImage>> {
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| find_tile(dir, &id.to_string()).is_none())
        .map(i64::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join(missing));
    }
    ids.iter()
        .map(|&id| {
            let path = find_tile(dir, &id.to_string()).expect("checked above");
            Ok((id, load_gray_image(&path)?))
        })
        .collect()
}
