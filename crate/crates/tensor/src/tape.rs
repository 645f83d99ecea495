//! Reverse-mode automatic differentiation over whole tensors.
//!
//! Every op appends a node holding its output value and enough saved state
//! to run its local backward rule. Nodes are only ever appended, so the
//! node order is a topological order and [`Tape::backward`] walks it in
//! reverse.

use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::conv::{self, Geom};
use crate::error::{shape_err, Result, TensorError};
use crate::gemm::{gemm, Mat};
use crate::par;
use crate::tensor::{strides, Tensor};

pub const NORM_EPS: f64 = 1e-5;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

/// Batch statistics computed by a train-mode batch-norm op.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Population variance (divided by the element count).
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddBroadcast { x: Var, y: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Reshape { x: Var },
    Permute { x: Var, axes: Vec<usize> },
    Concat { a: Var, b: Var, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    RepeatLeading { x: Var, times: usize },
    Sum { x: Var },
    Mean { x: Var },
    Relu { x: Var },
    Gelu { x: Var },
    Sigmoid { x: Var },
    Softmax { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    Dropout { x: Var, mask: Vec<f64> },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: Geom, batch: usize, out_channels: usize },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    Mse { pred: Var, target: Var },
    CrossEntropy { logits: Var, onehot: Var, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations and replays them backwards.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Whether a node's gradient must be computed.
fn needs(nodes: &[Node], v: Var) -> bool {
    nodes[v.index()].requires_grad
}

/// Adds into the gradient slot of `v`, allocating zeros on first touch.
fn accumulate(
    grads: &mut [Option<Vec<f64>>],
    nodes: &[Node],
    v: Var,
    f: impl FnOnce(&mut [f64]),
) {
    if !needs(nodes, v) {
        return;
    }
    let slot = grads[v.index()].get_or_insert_with(|| vec![0.0; nodes[v.index()].value.numel()]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..data.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `x · Φ(x)` with the exact error-function form.
pub fn gelu_scalar(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(data: &[f64], width: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for row in out.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Vars handed out before the reset become
    /// detached.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads = None;
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(TensorError::Detached);
        }
        self.nodes.get(v.index()).ok_or(TensorError::Detached)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.node(v)?.value)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.node(v)?.value.shape())
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.index()].requires_grad);
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var { tape: self.id, idx })
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            value: value.with_requires_grad(requires_grad),
            op: Op::Leaf,
            requires_grad,
        });
        Var { tape: self.id, idx }
    }

    /// Records a value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a leaf whose gradient [`Tape::backward`] will populate.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    // ---- linear algebra -------------------------------------------------

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        let (&[m, k], &[k2, n]) = (av.shape(), bv.shape()) else {
            return shape_err(
                "matmul",
                format!("expected 2-D operands, got {:?} and {:?}", av.shape(), bv.shape()),
            );
        };
        if k != k2 {
            return shape_err("matmul", format!("inner dims {k} vs {k2}"));
        }
        let mut out = vec![0.0; m * n];
        gemm(Mat::new(av.data(), m, k), Mat::new(bv.data(), k, n), 0.0, &mut out);
        let t = Tensor::new(&[m, n], out)?;
        self.push("matmul", t, Op::MatMul { a, b }, &[a, b])
    }

    /// Batched `[..., m, k] · [..., k, n]` with identical leading dims.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() < 3 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return shape_err("batch_matmul", format!("{sa:?} vs {sb:?}"));
        }
        let r = sa.len();
        let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
        if sb[r - 2] != k {
            return shape_err("batch_matmul", format!("inner dims {k} vs {}", sb[r - 2]));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        let (ad, bd) = (av.data(), bv.data());
        par::for_each_chunk(&mut out, m * n, |i, dst| {
            gemm(
                Mat::new(&ad[i * m * k..(i + 1) * m * k], m, k),
                Mat::new(&bd[i * k * n..(i + 1) * k * n], k, n),
                0.0,
                dst,
            );
        });
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        let t = Tensor::new(&shape, out)?;
        self.push("batch_matmul", t, Op::BatchMatMul { a, b }, &[a, b])
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.shape() != bv.shape() {
            return shape_err("add", format!("{:?} vs {:?}", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape(), data)?;
        self.push("add", t, Op::Add { a, b }, &[a, b])
    }

    /// `x + y` where `y`'s shape equals the trailing dims of `x`'s shape.
    pub fn add_broadcast(&mut self, x: Var, y: Var) -> Result<Var> {
        let (xv, yv) = (&self.node(x)?.value, &self.node(y)?.value);
        let (sx, sy) = (xv.shape(), yv.shape());
        if sy.len() > sx.len() || sx[sx.len() - sy.len()..] != *sy {
            return shape_err("add_broadcast", format!("{sy:?} is not a suffix of {sx:?}"));
        }
        let yd = yv.data();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(yd.len()) {
            add_into(chunk, yd);
        }
        let t = Tensor::new(sx, data)?;
        self.push("add_broadcast", t, Op::AddBroadcast { x, y }, &[x, y])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.shape() != bv.shape() {
            return shape_err("mul", format!("{:?} vs {:?}", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(av.shape(), data)?;
        self.push("mul", t, Op::Mul { a, b }, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let data = xv.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(xv.shape(), data)?;
        self.push("scale", t, Op::Scale { x, factor }, &[x])
    }

    // ---- layout ---------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.node(x)?.value.clone().reshape(shape)?;
        self.push("reshape", t, Op::Reshape { x }, &[x])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let rank = xv.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return shape_err("permute", format!("{axes:?} is not a permutation of rank {rank}"));
        }
        let (data, shape) = permute_data(xv.data(), xv.shape(), axes);
        let t = Tensor::new(&shape, data)?;
        self.push("permute", t, Op::Permute { x, axes: axes.to_vec() }, &[x])
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let rank = self.node(x)?.value.rank();
        if rank < 2 {
            return shape_err("transpose_last2", "rank < 2");
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(x, &axes)
    }

    /// Joins two tensors along `axis`; all other dims must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        let (sa, sb) = (av.shape(), bv.shape());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return shape_err("concat", format!("{sa:?} and {sb:?} along axis {axis}"));
        }
        let inner: usize = sa[axis + 1..].iter().product();
        let (ca, cb) = (sa[axis] * inner, sb[axis] * inner);
        let mut data = Vec::with_capacity(av.numel() + bv.numel());
        for (x, y) in av.data().chunks(ca).zip(bv.data().chunks(cb)) {
            data.extend_from_slice(x);
            data.extend_from_slice(y);
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let t = Tensor::new(&shape, data)?;
        self.push("concat", t, Op::Concat { a, b, axis }, &[a, b])
    }

    /// The sub-range `start..start + len` of `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let s = xv.shape();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return shape_err("narrow", format!("{start}+{len} on axis {axis} of {s:?}"));
        }
        let inner: usize = s[axis + 1..].iter().product();
        let data: Vec<f64> = xv
            .data()
            .chunks(s[axis] * inner)
            .flat_map(|c| c[start * inner..(start + len) * inner].iter().copied())
            .collect();
        let mut shape = s.to_vec();
        shape[axis] = len;
        let t = Tensor::new(&shape, data)?;
        self.push("narrow", t, Op::Narrow { x, axis, start }, &[x])
    }

    /// Stacks `times` copies of `x` along a new leading axis.
    pub fn repeat_leading(&mut self, x: Var, times: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        if times == 0 {
            return shape_err("repeat_leading", "zero copies");
        }
        let mut shape = vec![times];
        shape.extend_from_slice(xv.shape());
        let t = Tensor::new(&shape, xv.data().repeat(times))?;
        self.push("repeat_leading", t, Op::RepeatLeading { x, times }, &[x])
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x)?.value.data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let s = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean { x }, &[x])
    }

    // ---- activations ----------------------------------------------------

    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape(), data)?;
        self.push(name, t, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map("relu", x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map("gelu", x, gelu_scalar, Op::Gelu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, sigmoid_scalar, Op::Sigmoid { x })
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let width = *xv.shape().last().expect("tensors have rank >= 1");
        let t = Tensor::new(xv.shape(), softmax_rows(xv.data(), width))?;
        self.push("softmax_rows", t, Op::Softmax { x }, &[x])
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (
            &self.node(x)?.value,
            &self.node(gamma)?.value,
            &self.node(beta)?.value,
        );
        let d = *xv.shape().last().expect("rank >= 1");
        if gv.shape() != [d] || bv.shape() != [d] {
            return shape_err(
                "layernorm",
                format!("affine shapes {:?}/{:?} for width {d}", gv.shape(), bv.shape()),
            );
        }
        let rows = xv.numel() / d;
        let mut xhat = Vec::with_capacity(xv.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in xv.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(inv);
            xhat.extend(row.iter().map(|v| (v - mean) * inv));
        }
        let data = xhat
            .iter()
            .enumerate()
            .map(|(i, h)| gv.data()[i % d] * h + bv.data()[i % d])
            .collect();
        let t = Tensor::new(xv.shape(), data)?;
        self.push(
            "layernorm",
            t,
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
            &[x, gamma, beta],
        )
    }

    /// Batch normalization over axis 1 of `[B, C, ...]`.
    ///
    /// In train mode statistics come from the batch (population variance)
    /// and are returned for the caller's running-average update. In eval
    /// mode `running` supplies the mean and variance.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (xv, gv, bv) = (
            &self.node(x)?.value,
            &self.node(gamma)?.value,
            &self.node(beta)?.value,
        );
        let s = xv.shape();
        if s.len() < 2 {
            return shape_err("batchnorm", format!("need [B, C, ...], got {s:?}"));
        }
        let (b, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        if gv.shape() != [c] || bv.shape() != [c] {
            return shape_err("batchnorm", format!("affine shapes for {c} channels"));
        }
        let count = b * inner;
        let xd = xv.data();
        let at = |bi: usize, ci: usize| &xd[(bi * c + ci) * inner..(bi * c + ci + 1) * inner];
        let train = running.is_none();
        let (mean, var) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return shape_err("batchnorm", "running statistics width");
                }
                (m.to_vec(), v.to_vec())
            }
            None => {
                if b < 2 {
                    return Err(TensorError::BatchSize { op: "batchnorm", needed: 2, got: b });
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let m = (0..b).flat_map(|bi| at(bi, ci)).sum::<f64>() / count as f64;
                    let v = (0..b)
                        .flat_map(|bi| at(bi, ci))
                        .map(|x| (x - m).powi(2))
                        .sum::<f64>()
                        / count as f64;
                    mean[ci] = m;
                    var[ci] = v;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for (i, (&xv, (h, o))) in xd.iter().zip(xhat.iter_mut().zip(out.iter_mut())).enumerate() {
            let ci = (i / inner) % c;
            *h = (xv - mean[ci]) * inv_std[ci];
            *o = gv.data()[ci] * *h + bv.data()[ci];
        }
        let t = Tensor::new(s, out)?;
        let stats = train.then_some(BatchStats { mean, var, count });
        let v = self.push(
            "batchnorm",
            t,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train },
            &[x, gamma, beta],
        )?;
        Ok((v, stats))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales
    /// survivors by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Config { op: "dropout", detail: format!("rate {p}") });
        }
        let xv = &self.node(x)?.value;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(xv.shape(), data)?;
        self.push("dropout", t, Op::Dropout { x, mask }, &[x])
    }

    // ---- spatial --------------------------------------------------------

    /// Square-kernel 2-D cross-correlation over `[B, C, H, W]` or `[C, H, W]`
    /// input with `[O, C, k, k]` kernels.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.conv2d_with(x, w, b, (stride, stride), (padding, padding))
    }

    /// [`Tape::conv2d`] with per-axis stride and padding and any kernel extent.
    pub fn conv2d_with(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        let (xv, wv) = (&self.node(x)?.value, &self.node(w)?.value);
        let (batch, spatial, unbatched) = match xv.shape() {
            &[c, h, w] => (1, (c, h, w), true),
            &[b, c, h, w] => (b, (c, h, w), false),
            s => return shape_err("conv2d", format!("input must be 3-D or 4-D, got {s:?}")),
        };
        let &[o, ci, kh, kw] = wv.shape() else {
            return shape_err("conv2d", format!("kernel must be 4-D, got {:?}", wv.shape()));
        };
        if ci != spatial.0 {
            return shape_err("conv2d", format!("kernel expects {ci} channels, input has {}", spatial.0));
        }
        let bias = match b {
            Some(bv) => {
                let t = &self.node(bv)?.value;
                if t.shape() != [o] {
                    return shape_err("conv2d", format!("bias shape {:?} for {o} outputs", t.shape()));
                }
                Some(t.data())
            }
            None => None,
        };
        let geom = Geom::new("conv2d", ci, (spatial.1, spatial.2), (kh, kw), stride, padding)?;
        let out = conv::conv_forward(xv.data(), batch, wv.data(), o, bias, &geom);
        let shape = if unbatched {
            vec![o, geom.oh, geom.ow]
        } else {
            vec![batch, o, geom.oh, geom.ow]
        };
        let t = Tensor::new(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            "conv2d",
            t,
            Op::Conv2d { x, w, b, geom, batch, out_channels: o },
            &inputs,
        )
    }

    /// Max pooling over `[B, C, H, W]` or `[C, H, W]`.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let (batch, c, h, w, unbatched) = match xv.shape() {
            &[c, h, w] => (1, c, h, w, true),
            &[b, c, h, w] => (b, c, h, w, false),
            s => return shape_err("maxpool2d", format!("input must be 3-D or 4-D, got {s:?}")),
        };
        if 2 * padding > kernel {
            return Err(TensorError::Config {
                op: "maxpool2d",
                detail: format!("padding {padding} exceeds half of kernel {kernel}"),
            });
        }
        let geom = Geom::new(
            "maxpool2d",
            c,
            (h, w),
            (kernel, kernel),
            (stride, stride),
            (padding, padding),
        )?;
        let (out, argmax) = conv::maxpool_forward(xv.data(), batch, &geom);
        let shape = if unbatched {
            vec![c, geom.oh, geom.ow]
        } else {
            vec![batch, c, geom.oh, geom.ow]
        };
        let t = Tensor::new(&shape, out)?;
        self.push("maxpool2d", t, Op::MaxPool2d { x, argmax }, &[x])
    }

    // ---- losses ---------------------------------------------------------

    /// Mean squared error; operands must hold the same number of values.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (&self.node(pred)?.value, &self.node(target)?.value);
        if pv.numel() != tv.numel() {
            return shape_err("mse_loss", format!("{} predictions vs {} targets", pv.numel(), tv.numel()));
        }
        let n = pv.numel() as f64;
        let s = pv.data().iter().zip(tv.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
        self.push("mse_loss", Tensor::scalar(s), Op::Mse { pred, target }, &[pred, target])
    }

    /// Mean over rows of `-Σ onehot · log softmax(logits)`.
    pub fn cross_entropy_loss(&mut self, logits: Var, onehot: Var) -> Result<Var> {
        let (lv, ov) = (&self.node(logits)?.value, &self.node(onehot)?.value);
        let &[rows, k] = lv.shape() else {
            return shape_err("cross_entropy_loss", format!("logits must be [B, K], got {:?}", lv.shape()));
        };
        if ov.shape() != lv.shape() {
            return shape_err("cross_entropy_loss", format!("{:?} vs {:?}", lv.shape(), ov.shape()));
        }
        for (r, row) in ov.data().chunks(k).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != k {
                return Err(TensorError::Encoding { row: r, detail: format!("{row:?}") });
            }
        }
        let mut loss = 0.0;
        for (row, target) in lv.data().chunks(k).zip(ov.data().chunks(k)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += row.iter().zip(target).map(|(z, t)| t * (lse - z)).sum::<f64>();
        }
        let probs = softmax_rows(lv.data(), k);
        let t = Tensor::scalar(loss / rows as f64);
        self.push(
            "cross_entropy_loss",
            t,
            Op::CrossEntropy { logits, onehot, probs },
            &[logits, onehot],
        )
    }

    // ---- reverse pass ---------------------------------------------------

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Result<Option<&[f64]>> {
        self.node(v)?;
        Ok(self
            .grads
            .as_ref()
            .and_then(|g| g[v.index()].as_deref()))
    }

    pub fn has_run_backward(&self) -> bool {
        self.grads.is_some()
    }

    /// Propagates d`loss`/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let lv = &self.node(loss)?.value;
        if lv.numel() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.index()] = Some(vec![1.0]);
        for i in (0..=loss.index()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if node.requires_grad {
                backprop_node(nodes, &mut grads, node, &g);
            }
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }
}

fn backprop_node(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let val = |v: Var| &nodes[v.index()].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let gm = Mat::new(g, m, n);
            accumulate(grads, nodes, *a, |da| gemm(gm, Mat::new(bv.data(), k, n).t(), 1.0, da));
            accumulate(grads, nodes, *b, |db| gemm(Mat::new(av.data(), m, k).t(), gm, 1.0, db));
        }
        Op::BatchMatMul { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let r = av.rank();
            let (m, k, n) = (av.shape()[r - 2], av.shape()[r - 1], bv.shape()[r - 1]);
            let batch = av.numel() / (m * k);
            let (ad, bd) = (av.data(), bv.data());
            if needs(nodes, *a) {
                let mut da = vec![0.0; ad.len()];
                par::for_each_chunk(&mut da, m * k, |i, dst| {
                    gemm(
                        Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                        Mat::new(&bd[i * k * n..(i + 1) * k * n], k, n).t(),
                        0.0,
                        dst,
                    )
                });
                accumulate(grads, nodes, *a, |s| add_into(s, &da));
            }
            if needs(nodes, *b) {
                let mut db = vec![0.0; bd.len()];
                par::for_each_chunk(&mut db, k * n, |i, dst| {
                    gemm(
                        Mat::new(&ad[i * m * k..(i + 1) * m * k], m, k).t(),
                        Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                        0.0,
                        dst,
                    )
                });
                accumulate(grads, nodes, *b, |s| add_into(s, &db));
            }
            debug_assert_eq!(batch * m * n, g.len());
        }
        Op::Add { a, b } => {
            accumulate(grads, nodes, *a, |d| add_into(d, g));
            accumulate(grads, nodes, *b, |d| add_into(d, g));
        }
        Op::AddBroadcast { x, y } => {
            accumulate(grads, nodes, *x, |d| add_into(d, g));
            let ylen = val(*y).numel();
            accumulate(grads, nodes, *y, |d| {
                for chunk in g.chunks(ylen) {
                    add_into(d, chunk);
                }
            });
        }
        Op::Mul { a, b } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            accumulate(grads, nodes, *a, |d| {
                d.iter_mut().zip(g.iter().zip(bv)).for_each(|(d, (g, b))| *d += g * b)
            });
            accumulate(grads, nodes, *b, |d| {
                d.iter_mut().zip(g.iter().zip(av)).for_each(|(d, (g, a))| *d += g * a)
            });
        }
        Op::Scale { x, factor } => {
            accumulate(grads, nodes, *x, |d| {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g * factor)
            });
        }
        Op::Reshape { x } => accumulate(grads, nodes, *x, |d| add_into(d, g)),
        Op::Permute { x, axes } => {
            let mut inverse = vec![0; axes.len()];
            for (i, &a) in axes.iter().enumerate() {
                inverse[a] = i;
            }
            let (back, _) = permute_data(g, node.value.shape(), &inverse);
            accumulate(grads, nodes, *x, |d| add_into(d, &back));
        }
        Op::Concat { a, b, axis } => {
            let (sa, sb) = (val(*a).shape(), val(*b).shape());
            let inner: usize = sa[axis + 1..].iter().product();
            let (ca, cb) = (sa[*axis] * inner, sb[*axis] * inner);
            accumulate(grads, nodes, *a, |d| {
                for (dst, src) in d.chunks_mut(ca).zip(g.chunks(ca + cb)) {
                    add_into(dst, &src[..ca]);
                }
            });
            accumulate(grads, nodes, *b, |d| {
                for (dst, src) in d.chunks_mut(cb).zip(g.chunks(ca + cb)) {
                    add_into(dst, &src[ca..]);
                }
            });
        }
        Op::Narrow { x, axis, start } => {
            let s = val(*x).shape();
            let inner: usize = s[axis + 1..].iter().product();
            let len = node.value.shape()[*axis];
            accumulate(grads, nodes, *x, |d| {
                for (dst, src) in d.chunks_mut(s[*axis] * inner).zip(g.chunks(len * inner)) {
                    add_into(&mut dst[start * inner..(start + len) * inner], src);
                }
            });
        }
        Op::RepeatLeading { x, times } => {
            let n = val(*x).numel();
            debug_assert_eq!(n * times, g.len());
            accumulate(grads, nodes, *x, |d| {
                for chunk in g.chunks(n) {
                    add_into(d, chunk);
                }
            });
        }
        Op::Sum { x } => accumulate(grads, nodes, *x, |d| d.iter_mut().for_each(|v| *v += g[0])),
        Op::Mean { x } => {
            let n = val(*x).numel() as f64;
            accumulate(grads, nodes, *x, |d| d.iter_mut().for_each(|v| *v += g[0] / n))
        }
        Op::Relu { x } => {
            let xd = val(*x).data();
            accumulate(grads, nodes, *x, |d| {
                for ((d, g), x) in d.iter_mut().zip(g).zip(xd) {
                    if *x > 0.0 {
                        *d += g;
                    }
                }
            });
        }
        Op::Gelu { x } => {
            let xd = val(*x).data();
            accumulate(grads, nodes, *x, |d| {
                for ((d, g), &x) in d.iter_mut().zip(g).zip(xd) {
                    *d += g * (std_normal_cdf(x) + x * std_normal_pdf(x));
                }
            });
        }
        Op::Sigmoid { x } => {
            let yd = node.value.data();
            accumulate(grads, nodes, *x, |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(yd) {
                    *d += g * y * (1.0 - y);
                }
            });
        }
        Op::Softmax { x } => {
            let yd = node.value.data();
            let width = *node.value.shape().last().unwrap();
            accumulate(grads, nodes, *x, |d| {
                for ((d, g), y) in d.chunks_mut(width).zip(g.chunks(width)).zip(yd.chunks(width)) {
                    let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    for i in 0..width {
                        d[i] += y[i] * (g[i] - dot);
                    }
                }
            });
        }
        Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
            let gam = val(*gamma).data();
            let width = gam.len();
            accumulate(grads, nodes, *x, |d| {
                let n = width as f64;
                for (r, ((d, g), h)) in d
                    .chunks_mut(width)
                    .zip(g.chunks(width))
                    .zip(xhat.chunks(width))
                    .enumerate()
                {
                    let dh: Vec<f64> = g.iter().zip(gam).map(|(g, w)| g * w).collect();
                    let s1: f64 = dh.iter().sum();
                    let s2: f64 = dh.iter().zip(h).map(|(a, b)| a * b).sum();
                    for i in 0..width {
                        d[i] += inv_std[r] / n * (n * dh[i] - s1 - h[i] * s2);
                    }
                }
            });
            accumulate(grads, nodes, *gamma, |d| {
                for (i, (g, h)) in g.iter().zip(xhat).enumerate() {
                    d[i % width] += g * h;
                }
            });
            accumulate(grads, nodes, *beta, |d| {
                for (i, g) in g.iter().enumerate() {
                    d[i % width] += g;
                }
            });
        }
        Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
            let s = val(*x).shape();
            let (c, inner) = (s[1], s[2..].iter().product::<usize>());
            let ch = |i: usize| (i / inner) % c;
            let gam = val(*gamma).data();
            let mut sum_g = vec![0.0; c];
            let mut sum_gh = vec![0.0; c];
            for (i, (g, h)) in g.iter().zip(xhat).enumerate() {
                sum_g[ch(i)] += g;
                sum_gh[ch(i)] += g * h;
            }
            accumulate(grads, nodes, *x, |d| {
                let count = (g.len() / c) as f64;
                for (i, (d, (g, h))) in d.iter_mut().zip(g.iter().zip(xhat)).enumerate() {
                    let k = ch(i);
                    *d += if *train {
                        gam[k] * inv_std[k] / count * (count * g - sum_g[k] - h * sum_gh[k])
                    } else {
                        gam[k] * inv_std[k] * g
                    };
                }
            });
            accumulate(grads, nodes, *gamma, |d| add_into(d, &sum_gh));
            accumulate(grads, nodes, *beta, |d| add_into(d, &sum_g));
        }
        Op::Dropout { x, mask } => {
            accumulate(grads, nodes, *x, |d| {
                for ((d, g), m) in d.iter_mut().zip(g).zip(mask) {
                    *d += g * m;
                }
            });
        }
        Op::Conv2d { x, w, b, geom, batch, out_channels } => {
            let cg = conv::conv_backward(
                val(*x).data(),
                *batch,
                val(*w).data(),
                *out_channels,
                g,
                geom,
                needs(nodes, *x),
            );
            if let Some(dx) = cg.input {
                accumulate(grads, nodes, *x, |d| add_into(d, &dx));
            }
            accumulate(grads, nodes, *w, |d| add_into(d, &cg.weight));
            if let Some(b) = b {
                accumulate(grads, nodes, *b, |d| add_into(d, &cg.bias));
            }
        }
        Op::MaxPool2d { x, argmax } => {
            accumulate(grads, nodes, *x, |d| {
                for (g, &i) in g.iter().zip(argmax) {
                    d[i] += g;
                }
            });
        }
        Op::Mse { pred, target } => {
            let (pd, td) = (val(*pred).data(), val(*target).data());
            let scale = 2.0 * g[0] / pd.len() as f64;
            accumulate(grads, nodes, *pred, |d| {
                for (i, d) in d.iter_mut().enumerate() {
                    *d += scale * (pd[i] - td[i]);
                }
            });
            accumulate(grads, nodes, *target, |d| {
                for (i, d) in d.iter_mut().enumerate() {
                    *d -= scale * (pd[i] - td[i]);
                }
            });
        }
        Op::CrossEntropy { logits, onehot, probs } => {
            let od = val(*onehot).data();
            let rows = val(*logits).shape()[0] as f64;
            accumulate(grads, nodes, *logits, |d| {
                for (i, d) in d.iter_mut().enumerate() {
                    *d += g[0] * (probs[i] - od[i]) / rows;
                }
            });
            // Targets are labels; their gradient is not meaningful here.
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let v = tape.constant(t(&[2, 1], &[3.0, 4.0]));
        let out = tape.matmul(i, v).unwrap();
        assert_eq!(tape.value(out).unwrap().data(), &[3.0, 4.0]);

        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let out = tape.matmul(a, v).unwrap();
        assert_eq!(tape.value(out).unwrap().data(), &[11.0]);

        let bad = tape.constant(t(&[3, 1], &[0.0; 3]));
        assert!(matches!(tape.matmul(a, bad), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::full(&[2, 3, 4], 0.7));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().unwrap(), &[1.0; 24]);
    }

    #[test]
    fn scalar_mse_hand_rule() {
        // loss = (w·x − y)², grad_w = 2x(wx − y)
        let (w0, x0, y0) = (1.5, -2.0, 0.25);
        let mut tape = Tape::new();
        let w = tape.variable(Tensor::new(&[1, 1], vec![w0]).unwrap());
        let x = tape.constant(Tensor::new(&[1, 1], vec![x0]).unwrap());
        let y = tape.constant(Tensor::scalar(y0));
        let p = tape.matmul(w, x).unwrap();
        let loss = tape.mse_loss(p, y).unwrap();
        tape.backward(loss).unwrap();
        let g = tape.grad(w).unwrap().unwrap()[0];
        assert!((g - 2.0 * x0 * (w0 * x0 - y0)).abs() < 1e-12);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::scalar(2.0));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s), Err(TensorError::AlreadyBackpropagated));
        tape.reset();
        assert_eq!(tape.backward(s), Err(TensorError::Detached));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::zeros(&[3]));
        assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn vars_from_other_tapes_are_detached() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.variable(Tensor::scalar(1.0));
        assert_eq!(b.relu(x), Err(TensorError::Detached));
    }

    #[test]
    fn conv_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 100, 100], 0.5));
        let k = tape.constant(Tensor::full(&[1, 1, 5, 5], 0.1));
        let y = tape.conv2d(x, k, None, 2, 3).unwrap();
        assert_eq!(tape.shape(y).unwrap(), &[1, 51, 51]);

        let img: Vec<f64> = (0..9).map(f64::from).collect();
        let x = tape.constant(t(&[1, 3, 3], &img));
        let one = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
        let y = tape.conv2d(x, one, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), img.as_slice());

        let ones = tape.constant(Tensor::full(&[1, 3, 3], 1.0));
        let k = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d(ones, k, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[9.0]);
        assert_eq!(tape.shape(y).unwrap(), &[1, 1, 1]);

        let tiny = tape.constant(Tensor::zeros(&[1, 2, 2]));
        let big = tape.constant(Tensor::zeros(&[1, 1, 5, 5]));
        assert!(matches!(
            tape.conv2d(tiny, big, None, 1, 1),
            Err(TensorError::Config { .. })
        ));
    }

    #[test]
    fn conv_is_cross_correlation() {
        // An asymmetric kernel picks the right neighbour, not the left.
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 3], &[1.0, 2.0, 3.0]));
        let k = tape.constant(t(&[1, 1, 1, 2], &[0.0, 1.0]));
        let y = tape.conv2d_with(x, k, None, (1, 1), (0, 0)).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn maxpool_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 13, 13]));
        let y = tape.maxpool2d(x, 4, 1, 0).unwrap();
        assert_eq!(tape.shape(y).unwrap(), &[1, 10, 10]);

        let x = tape.constant(Tensor::zeros(&[1, 51, 51]));
        let y = tape.maxpool2d(x, 3, 2, 1).unwrap();
        assert_eq!(tape.shape(y).unwrap(), &[1, 26, 26]);

        let x = tape.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.maxpool2d(x, 2, 2, 0).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[4.0]);

        let x = tape.constant(Tensor::zeros(&[1, 3, 3]));
        assert!(tape.maxpool2d(x, 2, 1, 2).is_err());
    }

    #[test]
    fn maxpool_routes_gradient_to_first_argmax() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1, 2, 2], &[5.0, 5.0, 1.0, 2.0]));
        let y = tape.maxpool2d(x, 2, 2, 0).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_examples() {
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::full(&[1], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));

        let x = tape.constant(t(&[2, 1], &[1.0, 3.0]));
        let (y, stats) = tape.batchnorm(x, g, b, None).unwrap();
        let y = tape.value(y).unwrap().data().to_vec();
        assert!((y[0] + 1.0).abs() < 1e-5 && (y[1] - 1.0).abs() < 1e-5);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var, vec![1.0]);

        let x = tape.constant(t(&[3, 1], &[4.0, 4.0, 4.0]));
        let (y, _) = tape.batchnorm(x, g, b, None).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[0.0; 3]);

        let x = tape.constant(t(&[2, 1], &[0.3, -7.0]));
        let (y, stats) = tape.batchnorm(x, g, b, Some((&[0.0], &[1.0]))).unwrap();
        assert!(stats.is_none());
        let y = tape.value(y).unwrap().data();
        assert!((y[0] - 0.3).abs() < 1e-5 && (y[1] + 7.0).abs() < 1e-4);

        let x = tape.constant(t(&[1, 1], &[1.0]));
        assert!(matches!(
            tape.batchnorm(x, g, b, None),
            Err(TensorError::BatchSize { got: 1, .. })
        ));
    }

    #[test]
    fn activation_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[0.0, 1.0]));
        let y = tape.gelu(x).unwrap();
        let y = tape.value(y).unwrap().data();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 0.841_344_746_068_542_9).abs() < 1e-6);

        let z = tape.constant(Tensor::zeros(&[1, 3]));
        let s = tape.softmax_rows(z).unwrap();
        for v in tape.value(s).unwrap().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(t(&[2], &[1.0, 0.0]));
        let z = tape.constant(t(&[2], &[0.0, 0.0]));
        let l = tape.mse_loss(p, z).unwrap();
        assert_eq!(tape.value(l).unwrap().item(), 0.5);
        let l = tape.mse_loss(p, p).unwrap();
        assert_eq!(tape.value(l).unwrap().item(), 0.0);
        let short = tape.constant(t(&[1], &[0.0]));
        assert!(tape.mse_loss(p, short).is_err());

        let logits = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        let label = tape.constant(t(&[1, 2], &[1.0, 0.0]));
        let l = tape.cross_entropy_loss(logits, label).unwrap();
        assert!((tape.value(l).unwrap().item() - std::f64::consts::LN_2).abs() < 1e-12);

        let logits = tape.constant(t(&[1, 2], &[100.0, 0.0]));
        let l = tape.cross_entropy_loss(logits, label).unwrap();
        assert!(tape.value(l).unwrap().item() < 1e-6);

        let bad = tape.constant(t(&[1, 2], &[1.0, 1.0]));
        assert!(matches!(
            tape.cross_entropy_loss(logits, bad),
            Err(TensorError::Encoding { row: 0, .. })
        ));
    }

    #[test]
    fn non_finite_outputs_are_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[f64::MAX]));
        assert!(matches!(tape.scale(x, 10.0), Err(TensorError::NonFinite { op: "scale" })));
    }

    #[test]
    fn layout_ops() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2, 3], (0..6).map(f64::from).collect()).unwrap());
        let p = tape.transpose_last2(x).unwrap();
        assert_eq!(tape.value(p).unwrap().data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let n = tape.narrow(x, 1, 1, 2).unwrap();
        assert_eq!(tape.value(n).unwrap().data(), &[1.0, 2.0, 4.0, 5.0]);
        let c = tape.concat(x, n, 1).unwrap();
        assert_eq!(tape.shape(c).unwrap(), &[2, 5]);
        assert_eq!(
            tape.value(c).unwrap().data(),
            &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 5.0]
        );
        let r = tape.repeat_leading(n, 3).unwrap();
        assert_eq!(tape.shape(r).unwrap(), &[3, 2, 2]);
    }
}
