use std::collections::HashMap;

use firecast_tensor::Tensor;

use super::image::GrayImage;
use super::records::FireRecord;
use super::vegetation::{VegetationMap, VEG_GROUPS};
use super::weather::WEATHER_COLUMNS;
use crate::error::{Error, Result};

/// Row-major feature table with binary labels and optional image tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<i64>,
    pub width: usize,
    pub features: Vec<f64>,
    pub labels: Vec<bool>,
    pub images: Option<Vec<GrayImage>>,
}

impl Dataset {
    pub fn new(ids: Vec<i64>, width: usize, features: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if width == 0 || features.len() != width * labels.len() || ids.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} ids, {} labels and {} values at width {width}",
                ids.len(),
                labels.len(),
                features.len()
            )));
        }
        Ok(Self { ids, width, features, labels, images: None })
    }

    pub fn with_images(mut self, images: Vec<GrayImage>) -> Result<Self> {
        if images.len() != self.len() {
            return Err(Error::Dimension(format!("{} images for {} rows", images.len(), self.len())));
        }
        if let Some(first) = images.first() {
            let dims = (first.height(), first.width());
            if images.iter().any(|i| (i.height(), i.width()) != dims) {
                return Err(Error::Dimension("images differ in size".into()));
            }
        }
        self.images = Some(images);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            width: self.width,
            features: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            images: self
                .images
                .as_ref()
                .map(|imgs| indices.iter().map(|&i| imgs[i].clone()).collect()),
        }
    }

    /// Appends rows without images; fails on image-bearing tables.
    pub fn append_rows(&mut self, rows: &[Vec<f64>], label: bool, first_id: i64) -> Result<()> {
        if self.images.is_some() {
            return Err(Error::Sampling("cannot synthesize rows for a table with images".into()));
        }
        for (k, r) in rows.iter().enumerate() {
            if r.len() != self.width {
                return Err(Error::Dimension(format!("row width {} vs {}", r.len(), self.width)));
            }
            self.features.extend_from_slice(r);
            self.labels.push(label);
            self.ids.push(first_id + k as i64);
        }
        Ok(())
    }

    /// Features of `rows` as a `[rows.len(), width]` tensor.
    pub fn feature_tensor(&self, rows: &[usize]) -> Tensor {
        let data = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Tensor::new(&[rows.len(), self.width], data).expect("non-empty row selection")
    }

    /// Images of `rows` as a `[rows.len(), 1, h, w]` tensor.
    pub fn image_tensor(&self, rows: &[usize]) -> Result<Tensor> {
        let imgs = self
            .images
            .as_ref()
            .ok_or_else(|| Error::Join(rows.iter().map(|&i| self.ids[i].to_string()).collect()))?;
        let (h, w) = (imgs[0].height(), imgs[0].width());
        let data = rows.iter().flat_map(|&i| imgs[i].pixels().iter().copied()).collect();
        Ok(Tensor::new(&[rows.len(), 1, h, w], data)?)
    }

    pub fn label_values(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| if self.labels[i] { 1.0 } else { 0.0 }).collect()
    }
}

/// Column names of the assembled table.
pub fn feature_names(include_vegetation: bool) -> Vec<String> {
    let mut names = vec!["latitude".to_string(), "longitude".to_string()];
    names.extend(WEATHER_COLUMNS.iter().map(|s| s.to_string()));
    if include_vegetation {
        names.extend((1..=VEG_GROUPS).map(|g| format!("veg{g}")));
    }
    names
}

/// Builds the feature table: latitude, longitude, the twelve weather means
/// and, optionally, the six-wide vegetation block. Label is true for
/// lightning-caused fires. With `images`, every record must have a tile.
pub fn assemble_dataset(
    records: &[FireRecord],
    veg_map: &VegetationMap,
    include_vegetation: bool,
    images: Option<&HashMap<i64, GrayImage>>,
) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::Sampling("no records".into()));
    }
    let width = 14 + if include_vegetation { VEG_GROUPS } else { 0 };
    let mut features = Vec::with_capacity(records.len() * width);
    for r in records {
        features.push(r.latitude);
        features.push(r.longitude);
        features.extend_from_slice(&r.weather);
        if include_vegetation {
            features.extend_from_slice(&veg_map.encode(r.vegetation_category)?);
        }
    }
    let ids = records.iter().map(|r| r.fod_id).collect();
    let labels = records.iter().map(FireRecord::is_natural).collect();
    let data = Dataset::new(ids, width, features, labels)?;
    match images {
        None => Ok(data),
        Some(map) => {
            let missing: Vec<String> = records
                .iter()
                .filter(|r| !map.contains_key(&r.fod_id))
                .map(|r| r.fod_id.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(Error::Join(missing));
            }
            let imgs = records.iter().map(|r| map[&r.fod_id].clone()).collect();
            data.with_images(imgs)
        }
    }
}

/// Per-column z-scoring with statistics from the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    /// Population statistics of `rows`; constant columns get unit scale.
    pub fn fit(data: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Sampling("cannot standardize an empty selection".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; data.width];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; data.width];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, data: &mut Dataset) -> Result<()> {
        if data.width != self.width() {
            return Err(Error::Schema { expected: self.width(), got: data.width });
        }
        for row in data.features.chunks_mut(self.width()) {
            self.apply_row(row);
        }
        Ok(())
    }
}
