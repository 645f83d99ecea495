//! Parameterized layers on top of the tape.
//!
//! Weights use the uniform fan-in scheme `U(-1/√fan_in, 1/√fan_in)` for
//! both weights and biases; normalization layers start at scale 1, shift 0.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::graph::Graph;
use crate::params::{ParamId, ParamStore};
use crate::tape::Var;
use crate::tensor::Tensor;

pub const BATCHNORM_MOMENTUM: f64 = 0.1;

pub fn uniform_fan_in<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// `y = x · W + b` applied over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_param(
            format!("{name}.weight"),
            uniform_fan_in(&[in_dim, out_dim], in_dim, rng),
        );
        let bias = store.add_param(format!("{name}.bias"), uniform_fan_in(&[out_dim], in_dim, rng));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let shape = g.tape.shape(x)?.to_vec();
        if shape.last() != Some(&self.in_dim) {
            return shape_err("linear", format!("expected last dim {}, got {shape:?}", self.in_dim));
        }
        let rows = shape[..shape.len() - 1].iter().product();
        let flat = if shape.len() == 2 { x } else { g.tape.reshape(x, &[rows, self.in_dim])? };
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        let y = g.tape.matmul(flat, w)?;
        let y = g.tape.add_broadcast(y, b)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut out = shape;
            *out.last_mut().unwrap() = self.out_dim;
            g.tape.reshape(y, &out)
        }
    }
}

/// Batch normalization over axis 1 with running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add_param(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: store.add_param(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], 1.0)),
            momentum: BATCHNORM_MOMENTUM,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        if g.is_train() {
            let (y, stats) = g.tape.batchnorm(x, gamma, beta, None)?;
            let stats = stats.expect("train mode yields statistics");
            g.record_stats(self.running_mean, self.running_var, self.momentum, stats);
            Ok(y)
        } else {
            let store = g.store();
            let mean = store.get(self.running_mean).data();
            let var = store.get(self.running_var).data();
            Ok(g.tape.batchnorm(x, gamma, beta, Some((mean, var)))?.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add_param(format!("{name}.gamma"), Tensor::full(&[width], 1.0)),
            beta: store.add_param(format!("{name}.beta"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.tape.layernorm(x, gamma, beta)
    }
}

/// 2-D convolution layer; `kernel` is `(kh, kw)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weight = store.add_param(
            format!("{name}.weight"),
            uniform_fan_in(&[out_channels, in_channels, kernel.0, kernel.1], fan_in, rng),
        );
        let bias = bias.then(|| {
            store.add_param(format!("{name}.bias"), uniform_fan_in(&[out_channels], fan_in, rng))
        });
        Self { weight, bias, stride, padding }
    }

    /// Square kernel with equal stride and padding on both axes.
    #[allow(clippy::too_many_arguments)]
    pub fn square<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        Self::new(
            store,
            name,
            in_channels,
            out_channels,
            (kernel, kernel),
            (stride, stride),
            (padding, padding),
            bias,
            rng,
        )
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.tape.conv2d_with(x, w, b, self.stride, self.padding)
    }
}

/// Inverted dropout, identity outside train mode.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        if !g.is_train() || self.rate == 0.0 {
            return Ok(x);
        }
        g.dropout(x, self.rate)
    }
}
