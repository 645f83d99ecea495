//! Tile-grid inference: one tabular row replicated over an image mosaic.

use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::data::image::{find_tile, load_gray_image, to_u8, write_gray_bytes};
use crate::data::{Dataset, GrayImage};
use crate::error::{Error, Result};
use crate::train::predict;

/// Degrees of latitude per 100 m cell.
pub const CELL_DEGREES: f64 = 0.0009;
pub const FLAG_THRESHOLD: f64 = 0.70;

/// Centre of tile `(row, col)` for a grid whose northwest corner is at
/// `origin`, on a local equirectangular approximation.
pub fn tile_center(origin: (f64, f64), row: usize, col: usize) -> (f64, f64) {
    let (lat0, lon0) = origin;
    let lat = lat0 - (row as f64 + 0.5) * CELL_DEGREES;
    let lon = lon0 + (col as f64 + 0.5) * CELL_DEGREES / lat0.to_radians().cos();
    (lat, lon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    pub origin: (f64, f64),
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows · cols` entries.
    pub probabilities: Vec<f64>,
}

impl ProbabilityGrid {
    pub fn new(origin: (f64, f64), rows: usize, cols: usize, probabilities: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || probabilities.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} probabilities for a {rows}x{cols} grid",
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("grid probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { origin, rows, cols, probabilities })
    }

    pub fn flagged(&self, row: usize, col: usize) -> bool {
        self.probabilities[row * self.cols + col] > FLAG_THRESHOLD
    }

    /// `row,col,lat,lon,probability,flag_gt_70`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,lat,lon,probability,flag_gt_70\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (lat, lon) = tile_center(self.origin, r, c);
                let p = self.probabilities[r * self.cols + c];
                s += &format!("{r},{c},{lat:.6},{lon:.6},{p:?},{}\n", u8::from(self.flagged(r, c)));
            }
        }
        s
    }

    /// One pixel per tile, `round(255 · p)`.
    pub fn heatmap_bytes(&self) -> Vec<u8> {
        self.probabilities.iter().map(|&p| to_u8(p)).collect()
    }

    pub fn write_heatmap(&self, path: &Path) -> Result<()> {
        write_gray_bytes(path, self.cols, self.rows, &self.heatmap_bytes())
    }
}

/// Loads tiles named by their row-major index (`0.pgm`, `1.png`, ...).
pub fn load_tiles(dir: &Path, rows: usize, cols: usize) -> Result<Vec<GrayImage>> {
    let n = rows * cols;
    let missing: Vec<String> = (0..n)
        .filter(|i| find_tile(dir, &i.to_string()).is_none())
        .map(|i| i.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join(missing));
    }
    (0..n)
        .map(|i| load_gray_image(&find_tile(dir, &i.to_string()).expect("checked above")))
        .collect()
}

/// Scores every tile with the same raw tabular row.
pub fn predict_grid(
    checkpoint: &Checkpoint,
    info_row: &[f64],
    tiles: Vec<GrayImage>,
    rows: usize,
    cols: usize,
    origin: (f64, f64),
) -> Result<ProbabilityGrid> {
    let width = checkpoint.standardizer.width();
    if info_row.len() != width {
        return Err(Error::Schema { expected: width, got: info_row.len() });
    }
    if tiles.len() != rows * cols {
        return Err(Error::Dimension(format!("{} tiles for a {rows}x{cols} grid", tiles.len())));
    }
    let mut row = info_row.to_vec();
    checkpoint.standardizer.apply_row(&mut row);
    let n = tiles.len();
    let mut data = Dataset::new((0..n as i64).collect(), width, row.repeat(n), vec![false; n])?;
    if checkpoint.model.needs_images() {
        data = data.with_images(tiles)?;
    }
    let probs = predict(&checkpoint.model, &data)?;
    ProbabilityGrid::new(origin, rows, cols, probs)
}
