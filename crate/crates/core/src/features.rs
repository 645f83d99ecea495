//! Feature-map dumps: each ResNet stage reduced to one gray image by its
//! channel-wise first principal component.

use firecast_tensor::{Graph, Mode};

use crate::data::GrayImage;
use crate::error::{Error, Result};
use crate::models::HybridModel;

const POWER_ITERATIONS: usize = 500;

/// Projects every pixel of a `[C, h, w]` map onto the leading eigenvector
/// of the channel covariance and rescales the result to `[0, 1]`. The
/// eigenvector's sign is chosen so its loadings sum to a non-negative
/// value. A single channel is only rescaled.
pub fn first_component_map(values: &[f64], channels: usize, h: usize, w: usize) -> Result<GrayImage> {
    let n = h * w;
    if channels == 0 || n == 0 || values.len() != channels * n {
        return Err(Error::Dimension(format!("{} values for a {channels}x{h}x{w} map", values.len())));
    }
    let projected = if channels == 1 {
        values.to_vec()
    } else {
        let means: Vec<f64> = values.chunks(n).map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let mut cov = vec![0.0; channels * channels];
        for a in 0..channels {
            for b in a..channels {
                let s: f64 = (0..n)
                    .map(|p| (values[a * n + p] - means[a]) * (values[b * n + p] - means[b]))
                    .sum();
                cov[a * channels + b] = s / n as f64;
                cov[b * channels + a] = s / n as f64;
            }
        }
        let mut v = vec![1.0 / (channels as f64).sqrt(); channels];
        for _ in 0..POWER_ITERATIONS {
            let next: Vec<f64> = (0..channels)
                .map(|a| (0..channels).map(|b| cov[a * channels + b] * v[b]).sum())
                .collect();
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v = next.into_iter().map(|x| x / norm).collect();
        }
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (0..n)
            .map(|p| (0..channels).map(|c| v[c] * (values[c * n + p] - means[c])).sum())
            .collect()
    };
    let (lo, hi) = projected.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &x| (l.min(x), u.max(x)));
    let pixels = if hi > lo {
        projected.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; n]
    };
    GrayImage::new(h, w, pixels)
}

/// Eval-mode pass of one tile through the image branch, returning every
/// traced stage as `(stage name, image)`.
pub fn dump_feature_maps(model: &HybridModel, tile: &GrayImage) -> Result<Vec<(String, GrayImage)>> {
    let mut g = Graph::new(&model.store, Mode::Eval, 0);
    let x = firecast_tensor::Tensor::new(&[1, 1, tile.height(), tile.width()], tile.pixels().to_vec())?;
    let x = g.tape.constant(x);
    let (_, stages) = model.wiin.resnet.forward_traced(&mut g, x)?;
    let mut out = vec![("input".to_string(), tile.clone())];
    for stage in stages {
        let t = g.tape.value(stage.value)?;
        let s = t.shape();
        out.push((stage.name.to_string(), first_component_map(t.data(), s[1], s[2], s[3])?));
    }
    Ok(out)
}
