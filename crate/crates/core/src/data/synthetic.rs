//! Seeded generators for tests, benches and the bundled demo corpus.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use super::image::GrayImage;
use super::records::{FireRecord, CAUSE_LIGHTNING};
use crate::error::Result;

/// Two features in `[-1, 1]²`, labelled by the side of a fixed line, with
/// points closer than 0.1 to the line rejected.
pub fn separable_tabular(rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut features, mut labels) = (Vec::with_capacity(rows * 2), Vec::with_capacity(rows));
    while labels.len() < rows {
        let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let side = 0.8 * a - 0.6 * b + 0.1;
        if side.abs() < 0.1 {
            continue;
        }
        features.extend([a, b]);
        labels.push(side > 0.0);
    }
    Dataset::new((0..rows as i64).collect(), 2, features, labels).expect("consistent sizes")
}

/// A tile whose mean brightness encodes the class: about 0.65 for
/// positives and 0.35 for negatives, plus uniform per-pixel noise.
pub fn brightness_tile<R: Rng>(positive: bool, side: usize, rng: &mut R) -> GrayImage {
    let base = if positive { 0.65 } else { 0.35 } + rng.gen_range(-0.08..0.08);
    let pixels = (0..side * side)
        .map(|_| (base + rng.gen_range(-0.2..0.2f64)).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(side, side, pixels).expect("valid tile")
}

/// Alternating labels, standard-normal noise features and brightness tiles.
pub fn brightness_tiles(rows: usize, side: usize, tabular_width: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let labels: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    let features = (0..rows * tabular_width).map(|_| normal.sample(&mut rng)).collect();
    let images = labels.iter().map(|&l| brightness_tile(l, side, &mut rng)).collect();
    Dataset::new((0..rows as i64).collect(), tabular_width, features, labels)
        .and_then(|d| d.with_images(images))
        .expect("consistent sizes")
}

/// Fire records with weather loosely tied to the cause: lightning fires
/// skew hotter, drier and towards forest and shrub cover.
pub fn synthetic_records(rows: usize, natural_share: f64, seed: u64) -> Result<Vec<FireRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let start = NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date");
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let natural = rng.gen_bool(natural_share);
        let shift = if natural { 1.0 } else { 0.0 };
        let mut z = || -> f64 { normal.sample(&mut rng) };
        let temp = 18.0 + 6.0 * shift + 4.0 * z();
        let wind = 3.0 + 0.8 * shift + z().abs();
        let humid = (55.0 - 15.0 * shift + 8.0 * z()).clamp(0.0, 100.0);
        let precip = (1.2 - 0.8 * shift + 0.4 * z()).max(0.0);
        let mut weather = [0.0; 12];
        for (k, mean) in [temp, wind, humid, precip].into_iter().enumerate() {
            for w in 0..3 {
                let v = mean + 0.3 * (w as f64) * z();
                weather[k * 3 + w] = if k >= 2 { v.max(0.0) } else { v };
            }
        }
        let vegetation_category = if natural {
            [4u8, 6, 11, 12, 19][rng.gen_range(0..5)]
        } else {
            [9u8, 24, 25, 26, 28][rng.gen_range(0..5)]
        };
        let cause_code = if natural { CAUSE_LIGHTNING } else { rng.gen_range(2..=13) };
        out.push(FireRecord {
            fod_id: 1 + i as i64,
            latitude: 34.0 + 8.0 * rng.gen::<f64>() + shift,
            longitude: -122.0 + 10.0 * rng.gen::<f64>(),
            discovery_date: start + chrono::Duration::days(rng.gen_range(0..3650)),
            cause_code,
            fire_size: Some((rng.gen::<f64>() * 50.0 * 100.0).round() / 100.0),
            vegetation_category,
            weather,
        });
    }
    Ok(out)
}
