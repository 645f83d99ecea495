//! Convolution and max-pool kernels over `[B, C, H, W]` buffers.
//!
//! Convolution is cross-correlation (no kernel flip), lowered to GEMM via
//! im2col one image at a time. Batch items run through [`crate::par`], and
//! weight gradients are reduced in batch order.

use crate::error::{Result, TensorError};
use crate::gemm::{gemm, Mat};
use crate::par;

/// Output extent of a sliding window: `floor((n + 2p - k) / s) + 1`.
pub fn output_dim(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || n + 2 * padding < kernel {
        return None;
    }
    Some((n + 2 * padding - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geom {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        op: &'static str,
        channels: usize,
        (h, w): (usize, usize),
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Result<Self> {
        let (Some(oh), Some(ow)) = (output_dim(h, kh, sh, ph), output_dim(w, kw, sw, pw)) else {
            return Err(TensorError::Config {
                op,
                detail: format!(
                    "kernel {kh}x{kw} stride {sh}x{sw} padding {ph}x{pw} does not fit input {h}x{w}"
                ),
            });
        };
        Ok(Self {
            channels,
            h,
            w,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            oh,
            ow,
        })
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.h * self.w
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for output `(oy, ox)` and kernel tap `(ky, kx)`, if not padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.sh + ky).checked_sub(self.ph)?;
        let x = (ox * self.sw + kx).checked_sub(self.pw)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Lowers one `[C, H, W]` image to a `[C·kh·kw, OH·OW]` patch matrix.
fn im2col(img: &[f64], g: &Geom) -> Vec<f64> {
    let p = g.out_pixels();
    let mut cols = vec![0.0; g.patch_len() * p];
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * p;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            cols[row + oy * g.ow + ox] = plane[y * g.w + x];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(cols: &[f64], g: &Geom, img: &mut [f64]) {
    let p = g.out_pixels();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * p;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            plane[y * g.w + x] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution of `batch` images; `weight` is `[O, C, kh, kw]`.
pub(crate) fn conv_forward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    out_channels: usize,
    bias: Option<&[f64]>,
    g: &Geom,
) -> Vec<f64> {
    let p = g.out_pixels();
    let mut out = vec![0.0; batch * out_channels * p];
    let w = Mat::new(weight, out_channels, g.patch_len());
    par::for_each_chunk(&mut out, out_channels * p, |b, dst| {
        let img = &input[b * g.in_len()..(b + 1) * g.in_len()];
        let cols = im2col(img, g);
        gemm(w, Mat::new(&cols, g.patch_len(), p), 0.0, dst);
        if let Some(bias) = bias {
            for (o, row) in dst.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v += bias[o]);
            }
        }
    });
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn conv_backward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    out_channels: usize,
    grad_out: &[f64],
    g: &Geom,
    need_input: bool,
) -> ConvGrads {
    let p = g.out_pixels();
    let k = g.patch_len();
    let w = Mat::new(weight, out_channels, k);
    let per_item = par::map_range(batch, |b| {
        let img = &input[b * g.in_len()..(b + 1) * g.in_len()];
        let go = &grad_out[b * out_channels * p..(b + 1) * out_channels * p];
        let cols = im2col(img, g);
        let mut dw = vec![0.0; out_channels * k];
        gemm(
            Mat::new(go, out_channels, p),
            Mat::new(&cols, k, p).t(),
            0.0,
            &mut dw,
        );
        let db: Vec<f64> = go.chunks(p).map(|row| row.iter().sum()).collect();
        let dx = need_input.then(|| {
            let mut dcols = vec![0.0; k * p];
            gemm(w.t(), Mat::new(go, out_channels, p), 0.0, &mut dcols);
            let mut dx = vec![0.0; g.in_len()];
            col2im_add(&dcols, g, &mut dx);
            dx
        });
        (dw, db, dx)
    });
    let mut weight_grad = vec![0.0; out_channels * k];
    let mut bias_grad = vec![0.0; out_channels];
    let mut input_grad = need_input.then(|| Vec::with_capacity(batch * g.in_len()));
    for (dw, db, dx) in per_item {
        weight_grad.iter_mut().zip(dw).for_each(|(a, v)| *a += v);
        bias_grad.iter_mut().zip(db).for_each(|(a, v)| *a += v);
        if let (Some(acc), Some(dx)) = (input_grad.as_mut(), dx) {
            acc.extend(dx);
        }
    }
    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad,
    }
}

/// Max-pool forward. Returns the pooled values and, per output cell, the
/// flat input index of the selected maximum (first in scan order on ties).
/// Padding never wins over a real cell.
pub(crate) fn maxpool_forward(input: &[f64], batch: usize, g: &Geom) -> (Vec<f64>, Vec<usize>) {
    let plane_in = g.h * g.w;
    let p = g.out_pixels();
    let planes = batch * g.channels;
    let per_plane = par::map_range(planes, |pl| {
        let src = &input[pl * plane_in..(pl + 1) * plane_in];
        let mut vals = Vec::with_capacity(p);
        let mut idx = Vec::with_capacity(p);
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut best: Option<(f64, usize)> = None;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            let v = src[y * g.w + x];
                            if best.map_or(true, |(b, _)| v > b) {
                                best = Some((v, y * g.w + x));
                            }
                        }
                    }
                }
                // Geometry validation guarantees at least one real cell.
                let (v, i) = best.expect("pool window covers only padding");
                vals.push(v);
                idx.push(pl * plane_in + i);
            }
        }
        (vals, idx)
    });
    let mut out = Vec::with_capacity(planes * p);
    let mut arg = Vec::with_capacity(planes * p);
    for (v, i) in per_plane {
        out.extend(v);
        arg.extend(i);
    }
    (out, arg)
}
