//! Image feature extractor: a small residual CNN followed by a two-block
//! transformer that reduces each tile to a token feature and an image
//! feature.

use firecast_tensor::nn::{uniform_fan_in, BatchNorm, Conv2d, Dropout, LayerNorm, Linear};
use firecast_tensor::{output_dim, Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub input_size: usize,
    pub stem_channels: usize,
    pub block1_channels: usize,
    pub block2_channels: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self { input_size: 100, stem_channels: 16, block1_channels: 16, block2_channels: 32 }
    }
}

impl ResNetConfig {
    /// Spatial side after the stem conv, stem pool, block 1, block 2 and
    /// the final pool.
    pub fn stage_sizes(&self) -> Result<[usize; 5]> {
        let fail = || Error::Dimension(format!("input size {} is too small", self.input_size));
        let conv = output_dim(self.input_size, 5, 2, 3).ok_or_else(fail)?;
        let pool = output_dim(conv, 3, 2, 1).ok_or_else(fail)?;
        let down = output_dim(pool, 3, 2, 1).ok_or_else(fail)?;
        let last = output_dim(down, 4, 1, 0).ok_or_else(fail)?;
        Ok([conv, pool, pool, down, last])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitConfig {
    pub patch_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp: usize,
    pub dropout: f64,
    pub image_kernel: usize,
}

impl Default for WitConfig {
    fn default() -> Self {
        Self { patch_size: 2, hidden: 64, layers: 2, heads: 8, mlp: 8, dropout: 0.2, image_kernel: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WiinConfig {
    pub resnet: ResNetConfig,
    pub wit: WitConfig,
}

/// Conv (no bias) followed by batch norm.
#[derive(Debug, Clone)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::square(store, &format!("{name}.conv"), cin, cout, kernel, stride, padding, false, rng),
            bn: BatchNorm::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        Ok(self.bn.forward(g, y)?)
    }
}

/// `relu(F(x) + S(x))` where `F` is a conv-bn stack with ReLU between
/// layers and `S` is the identity or a strided 1×1 conv-bn.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    body: Vec<ConvBn>,
    shortcut: Option<ConvBn>,
}

impl ResidualBlock {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.body.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i + 1 < self.body.len() {
                h = g.tape.relu(h)?;
            }
        }
        let s = match &self.shortcut {
            Some(sc) => sc.forward(g, x)?,
            None => x,
        };
        let sum = g.tape.add(h, s)?;
        Ok(g.tape.relu(sum)?)
    }
}

/// A named intermediate value, kept for shape checks and feature dumps.
#[derive(Debug, Clone, Copy)]
pub struct Stage {
    pub name: &'static str,
    pub value: Var,
}

#[derive(Debug, Clone)]
pub struct ResNet {
    config: ResNetConfig,
    stem: ConvBn,
    pub block1: ResidualBlock,
    pub block2: ResidualBlock,
    collapse: Conv2d,
}

impl ResNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, config: &ResNetConfig, rng: &mut R) -> Result<Self> {
        config.stage_sizes()?;
        let ResNetConfig { stem_channels: c0, block1_channels: c1, block2_channels: c2, .. } = *config;
        if c0 == 0 || c1 == 0 || c2 == 0 {
            return Err(Error::Dimension("channel widths must be positive".into()));
        }
        let p = |s: &str| format!("{prefix}.{s}");
        let stem = ConvBn::new(store, &p("stem"), 1, c0, 5, 2, 3, rng);
        let block1 = ResidualBlock {
            body: (0..3)
                .map(|i| ConvBn::new(store, &p(&format!("block1.{i}")), if i == 0 { c0 } else { c1 }, c1, 3, 1, 1, rng))
                .collect(),
            shortcut: (c0 != c1).then(|| ConvBn::new(store, &p("block1.shortcut"), c0, c1, 1, 1, 0, rng)),
        };
        let block2 = ResidualBlock {
            body: vec![
                ConvBn::new(store, &p("block2.0"), c1, c2, 3, 2, 1, rng),
                ConvBn::new(store, &p("block2.1"), c2, c2, 3, 1, 1, rng),
            ],
            shortcut: Some(ConvBn::new(store, &p("block2.shortcut"), c1, c2, 1, 2, 0, rng)),
        };
        let collapse = Conv2d::square(store, &p("collapse"), c2, 1, 1, 1, 0, true, rng);
        Ok(Self { config: config.clone(), stem, block1, block2, collapse })
    }

    pub fn output_side(&self) -> usize {
        self.config.stage_sizes().expect("validated at construction")[4]
    }

    /// `x` is `[B, 1, S, S]`; returns `[B, 1, s, s]` plus every stage.
    pub fn forward_traced(&self, g: &mut Graph<'_>, x: Var) -> Result<(Var, Vec<Stage>)> {
        let shape = g.tape.shape(x)?;
        let s = self.config.input_size;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != s || shape[3] != s {
            return Err(Error::Dimension(format!("expected [B, 1, {s}, {s}] images, got {shape:?}")));
        }
        let mut stages = Vec::new();
        let mut tap = |name, value| stages.push(Stage { name, value });
        let conv = self.stem.conv.forward(g, x)?;
        tap("stem.conv", conv);
        let bn = self.stem.bn.forward(g, conv)?;
        tap("stem.bn", bn);
        let h = g.tape.relu(bn)?;
        let h = g.tape.maxpool2d(h, 3, 2, 1)?;
        tap("stem.pool", h);
        let h = self.block1.forward(g, h)?;
        tap("block1", h);
        let h = self.block2.forward(g, h)?;
        tap("block2", h);
        let h = g.tape.maxpool2d(h, 4, 1, 0)?;
        tap("pool", h);
        let out = self.collapse.forward(g, h)?;
        tap("collapse", out);
        Ok((out, stages))
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        Ok(self.forward_traced(g, x)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct WitBlock {
    ln1: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    ln2: LayerNorm,
    pub mlp_in: Linear,
    pub mlp_out: Linear,
    dropout: Dropout,
    heads: usize,
}

/// Attention output with its row-stochastic weights `[B, H, T, T]`.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub output: Var,
    pub weights: Var,
    /// Per-head queries before transposition, `[B, T, H, D/H]`.
    pub split_queries: Var,
}

impl WitBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: &WitConfig, rng: &mut R) -> Result<Self> {
        let d = config.hidden;
        if config.heads == 0 || d % config.heads != 0 {
            return Err(Error::Dimension(format!("hidden {d} not divisible by {} heads", config.heads)));
        }
        let lin = |store: &mut ParamStore, s: &str, i, o, rng: &mut R| Linear::new(store, &format!("{name}.{s}"), i, o, rng);
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            wq: lin(store, "wq", d, d, rng),
            wk: lin(store, "wk", d, d, rng),
            wv: lin(store, "wv", d, d, rng),
            wo: lin(store, "wo", d, d, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            mlp_in: lin(store, "mlp_in", d, config.mlp, rng),
            mlp_out: lin(store, "mlp_out", config.mlp, d, rng),
            dropout: Dropout { rate: config.dropout },
            heads: config.heads,
        })
    }

    fn split_heads(&self, g: &mut Graph<'_>, x: Var, shape: &[usize]) -> Result<Var> {
        let (b, t, d) = (shape[0], shape[1], shape[2]);
        let x = g.tape.reshape(x, &[b, t, self.heads, d / self.heads])?;
        Ok(g.tape.permute(x, &[0, 2, 1, 3])?)
    }

    /// Multi-head scaled dot-product self-attention over `[B, T, D]`.
    pub fn attention(&self, g: &mut Graph<'_>, x: Var) -> Result<Attention> {
        let shape = g.tape.shape(x)?.to_vec();
        let (b, t, d) = (shape[0], shape[1], shape[2]);
        let q = self.wq.forward(g, x)?;
        let split_queries = g.tape.reshape(q, &[b, t, self.heads, d / self.heads])?;
        let q = g.tape.permute(split_queries, &[0, 2, 1, 3])?;
        let k = self.wk.forward(g, x)?;
        let k = self.split_heads(g, k, &shape)?;
        let v = self.wv.forward(g, x)?;
        let v = self.split_heads(g, v, &shape)?;
        let kt = g.tape.transpose_last2(k)?;
        let scores = g.tape.batch_matmul(q, kt)?;
        let scores = g.tape.scale(scores, 1.0 / ((d / self.heads) as f64).sqrt())?;
        let weights = g.tape.softmax_rows(scores)?;
        let z = g.tape.batch_matmul(weights, v)?;
        let z = g.tape.permute(z, &[0, 2, 1, 3])?;
        let z = g.tape.reshape(z, &[b, t, d])?;
        let output = self.wo.forward(g, z)?;
        Ok(Attention { output, weights, split_queries })
    }

    /// Pre-norm residual attention, then pre-norm residual MLP.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let shape = g.tape.shape(x)?;
        if shape.len() != 3 {
            return Err(Error::Dimension(format!("transformer block expects [B, T, D], got {shape:?}")));
        }
        let n = self.ln1.forward(g, x)?;
        let a = self.attention(g, n)?.output;
        let x = g.tape.add(x, a)?;
        let n = self.ln2.forward(g, x)?;
        let h = self.mlp_in.forward(g, n)?;
        let h = g.tape.gelu(h)?;
        let h = self.dropout.forward(g, h)?;
        let h = self.mlp_out.forward(g, h)?;
        Ok(g.tape.add(x, h)?)
    }
}

#[derive(Debug, Clone)]
pub struct Wit {
    config: WitConfig,
    patches: usize,
    embed: Conv2d,
    pub token: ParamId,
    pub position: ParamId,
    pub blocks: Vec<WitBlock>,
    norm_out: LayerNorm,
    token_head: Linear,
    image_conv: Conv2d,
    image_head: Linear,
}

impl Wit {
    /// `fmap_side` is the side of the single-channel map fed in.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        config: &WitConfig,
        fmap_side: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let p = config.patch_size;
        if p == 0 || fmap_side % p != 0 {
            return Err(Error::Dimension(format!("feature map side {fmap_side} not divisible by patch size {p}")));
        }
        if config.image_kernel % 2 == 0 {
            return Err(Error::Dimension("image conv kernel must be odd".into()));
        }
        let d = config.hidden;
        let patches = (fmap_side / p) * (fmap_side / p);
        let name = |s: &str| format!("{prefix}.{s}");
        let embed = Conv2d::square(store, &name("embed"), 1, d, p, p, 0, true, rng);
        let token = store.add_param(name("token"), uniform_fan_in(&[1, d], d, rng));
        let position = store.add_param(name("position"), Tensor::zeros(&[patches + 1, d]));
        let blocks = (0..config.layers)
            .map(|i| WitBlock::new(store, &name(&format!("block{i}")), config, rng))
            .collect::<Result<_>>()?;
        let k = config.image_kernel;
        Ok(Self {
            config: config.clone(),
            patches,
            embed,
            token,
            position,
            blocks,
            norm_out: LayerNorm::new(store, &name("norm_out"), d),
            token_head: Linear::new(store, &name("token_head"), d, 1, rng),
            image_conv: Conv2d::new(store, &name("image_conv"), d, 1, (1, k), (1, 1), (0, k / 2), true, rng),
            image_head: Linear::new(store, &name("image_head"), patches, 1, rng),
        })
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    /// `[B, 1, s, s]` to `[B, N + 1, D]`: patch conv, flatten, prepend the
    /// learnable token, add positional encodings.
    pub fn patch_embed(&self, g: &mut Graph<'_>, fmap: Var) -> Result<Var> {
        let shape = g.tape.shape(fmap)?.to_vec();
        let p = self.config.patch_size;
        let side = (self.patches as f64).sqrt() as usize * p;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != side || shape[3] != side {
            return Err(Error::Dimension(format!("patching expects [B, 1, {side}, {side}], got {shape:?}")));
        }
        let (b, d, n) = (shape[0], self.config.hidden, self.patches);
        let e = self.embed.forward(g, fmap)?;
        let e = g.tape.reshape(e, &[b, d, n])?;
        let e = g.tape.permute(e, &[0, 2, 1])?;
        let token = g.param(self.token);
        let tokens = g.tape.repeat_leading(token, b)?;
        let z = g.tape.concat(tokens, e, 1)?;
        let pos = g.param(self.position);
        Ok(g.tape.add_broadcast(z, pos)?)
    }

    /// `[B, N + 1, D]` to `[B, 2]` holding (token feature, image feature).
    pub fn head(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        let (b, d, n) = (g.tape.shape(z)?[0], self.config.hidden, self.patches);
        let t = g.tape.narrow(z, 1, 0, 1)?;
        let t = g.tape.reshape(t, &[b, d])?;
        let t = self.norm_out.forward(g, t)?;
        let token = self.token_head.forward(g, t)?;
        let rows = g.tape.narrow(z, 1, 1, n)?;
        let rows = g.tape.permute(rows, &[0, 2, 1])?;
        let rows = g.tape.reshape(rows, &[b, d, 1, n])?;
        let c = self.image_conv.forward(g, rows)?;
        let c = g.tape.reshape(c, &[b, n])?;
        let image = self.image_head.forward(g, c)?;
        Ok(g.tape.concat(token, image, 1)?)
    }

    pub fn forward(&self, g: &mut Graph<'_>, fmap: Var) -> Result<Var> {
        let mut z = self.patch_embed(g, fmap)?;
        for block in &self.blocks {
            z = block.forward(g, z)?;
        }
        self.head(g, z)
    }
}

/// Per-tile output of the extractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WiinOutput {
    pub token_feature: f64,
    pub image_feature: f64,
}

impl WiinOutput {
    /// Splits a `[B, 2]` feature tensor.
    pub fn from_tensor(t: &Tensor) -> Vec<WiinOutput> {
        t.data()
            .chunks(2)
            .map(|c| WiinOutput { token_feature: c[0], image_feature: c[1] })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Wiin {
    pub resnet: ResNet,
    pub wit: Wit,
    params: Vec<ParamId>,
}

impl Wiin {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, config: &WiinConfig, rng: &mut R) -> Result<Self> {
        let first = store.len();
        let resnet = ResNet::new(store, &format!("{prefix}.resnet"), &config.resnet, rng)?;
        let wit = Wit::new(store, &format!("{prefix}.wit"), &config.wit, resnet.output_side(), rng)?;
        let params = store.ids().skip(first).collect();
        Ok(Self { resnet, wit, params })
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.params
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        super::count_params(store, &self.params)
    }

    /// `[B, 1, S, S]` images to `[B, 2]` features.
    pub fn forward(&self, g: &mut Graph<'_>, images: Var) -> Result<Var> {
        let fmap = self.resnet.forward(g, images)?;
        self.wit.forward(g, fmap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use firecast_tensor::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.gen::<f64>()).collect()).unwrap()
    }

    fn zero_where(store: &mut ParamStore, pred: impl Fn(&str) -> bool) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.is_trainable(id) && pred(store.name(id)) {
                store.get_mut(id).data_mut().fill(0.0);
            }
        }
    }

    #[test]
    fn configured_stage_sizes() {
        assert_eq!(ResNetConfig::default().stage_sizes().unwrap(), [51, 26, 26, 13, 10]);
        let tiny = ResNetConfig { input_size: 3, ..ResNetConfig::default() };
        assert!(tiny.stage_sizes().is_err());
    }

    #[test]
    fn resnet_shape_chain() {
        let mut store = ParamStore::new();
        let net = ResNet::new(&mut store, "r", &ResNetConfig::default(), &mut rng()).unwrap();
        let mut g = Graph::new(&store, Mode::Train, 0);
        let x = g.tape.constant(random(&[2, 1, 100, 100], 1));
        let (out, stages) = net.forward_traced(&mut g, x).unwrap();
        let side = |v: Var| g.tape.shape(v).unwrap()[2];
        let sides: Vec<(&str, usize)> = stages.iter().map(|s| (s.name, side(s.value))).collect();
        assert_eq!(
            sides,
            [("stem.conv", 51), ("stem.bn", 51), ("stem.pool", 26), ("block1", 26), ("block2", 13), ("pool", 10), ("collapse", 10)]
        );
        assert_eq!(g.tape.shape(out).unwrap(), &[2, 1, 10, 10]);
        assert_eq!(g.tape.shape(stages[4].value).unwrap()[1], 32);
    }

    #[test]
    fn resnet_rejects_other_sizes() {
        let mut store = ParamStore::new();
        let net = ResNet::new(&mut store, "r", &ResNetConfig::default(), &mut rng()).unwrap();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let x = g.tape.constant(Tensor::zeros(&[1, 1, 99, 100]));
        assert!(matches!(net.forward(&mut g, x), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_input_and_biases_give_zero_output() {
        let mut store = ParamStore::new();
        let net = ResNet::new(&mut store, "r", &ResNetConfig::default(), &mut rng()).unwrap();
        zero_where(&mut store, |n| n.ends_with(".bias"));
        for mode in [Mode::Train, Mode::Eval] {
            let mut g = Graph::new(&store, mode, 0);
            let x = g.tape.constant(Tensor::zeros(&[2, 1, 100, 100]));
            let y = net.forward(&mut g, x).unwrap();
            assert!(g.tape.value(y).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zeroed_identity_block_passes_input_through() {
        let mut store = ParamStore::new();
        let net = ResNet::new(&mut store, "r", &ResNetConfig::default(), &mut rng()).unwrap();
        zero_where(&mut store, |n| n.starts_with("r.block1") && n.ends_with("conv.weight"));
        // Post-activation inputs are non-negative.
        let x = random(&[2, 16, 6, 6], 3);
        for mode in [Mode::Train, Mode::Eval] {
            let mut g = Graph::new(&store, mode, 0);
            let xv = g.tape.constant(x.clone());
            let y = net.block1.forward(&mut g, xv).unwrap();
            assert_eq!(g.tape.value(y).unwrap().data(), x.data());
        }
    }

    fn wit(config: &WitConfig) -> (ParamStore, Wit) {
        let mut store = ParamStore::new();
        let w = Wit::new(&mut store, "w", config, 10, &mut rng()).unwrap();
        (store, w)
    }

    #[test]
    fn patch_embedding_shapes() {
        let (store, w) = wit(&WitConfig::default());
        assert_eq!(w.patches(), 25);
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let x = g.tape.constant(random(&[3, 1, 10, 10], 4));
        let z = w.patch_embed(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(z).unwrap(), &[3, 26, 64]);
        let mut s = ParamStore::new();
        let odd = Wit::new(&mut s, "w", &WitConfig::default(), 9, &mut rng());
        assert!(matches!(odd, Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_embedding_leaves_only_the_token() {
        let (mut store, w) = wit(&WitConfig::default());
        zero_where(&mut store, |n| n.starts_with("w.embed"));
        let token = store.get(w.token).data().to_vec();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let x = g.tape.constant(random(&[2, 1, 10, 10], 5));
        let z = w.patch_embed(&mut g, x).unwrap();
        let z = g.tape.value(z).unwrap().data();
        for b in 0..2 {
            let item = &z[b * 26 * 64..(b + 1) * 26 * 64];
            assert_eq!(&item[..64], token.as_slice());
            assert!(item[64..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn attention_heads_and_rows() {
        let (store, w) = wit(&WitConfig::default());
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let x = g.tape.constant(random(&[2, 26, 64], 6));
        let a = w.blocks[0].attention(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(a.split_queries).unwrap(), &[2, 26, 8, 8]);
        assert_eq!(g.tape.shape(a.output).unwrap(), &[2, 26, 64]);
        let weights = g.tape.value(a.weights).unwrap();
        assert_eq!(weights.shape(), &[2, 8, 26, 26]);
        for row in weights.data().chunks(26) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_tokens_give_identical_rows() {
        let (store, w) = wit(&WitConfig::default());
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let row = random(&[64], 7).into_data();
        let x = Tensor::new(&[1, 26, 64], row.repeat(26)).unwrap();
        let x = g.tape.constant(x);
        let a = w.blocks[0].attention(&mut g, x).unwrap();
        let out = g.tape.value(a.output).unwrap().data();
        for r in out.chunks(64) {
            assert_eq!(r, &out[..64]);
        }
        for p in g.tape.value(a.weights).unwrap().data() {
            assert!((p - 1.0 / 26.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_block_is_identity_and_eval_is_repeatable() {
        let (mut store, w) = wit(&WitConfig::default());
        let x = random(&[2, 26, 64], 8);
        let run = |store: &ParamStore, mode, seed| {
            let mut g = Graph::new(store, mode, seed);
            let xv = g.tape.constant(x.clone());
            let y = w.blocks[0].forward(&mut g, xv).unwrap();
            g.tape.value(y).unwrap().clone()
        };
        let a = run(&store, Mode::Eval, 3);
        assert_eq!(a.shape(), &[2, 26, 64]);
        assert_eq!(a, run(&store, Mode::Eval, 4));
        assert_eq!(run(&store, Mode::Train, 3), run(&store, Mode::Train, 3));
        assert_ne!(run(&store, Mode::Train, 3), run(&store, Mode::Train, 4));
        zero_where(&mut store, |n| n.contains(".wo.") || n.contains(".mlp_out."));
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(run(&store, mode, 5).data(), x.data());
        }
    }

    #[test]
    fn head_emits_two_finite_features() {
        let (store, w) = wit(&WitConfig::default());
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..1000 {
            let scale = 10f64.powi(r.gen_range(-3..4));
            let data = (0..100).map(|_| r.gen_range(-1.0..1.0) * scale).collect();
            let mut g = Graph::new(&store, Mode::Train, trial);
            let x = g.tape.constant(Tensor::new(&[1, 1, 10, 10], data).unwrap());
            let y = w.forward(&mut g, x).unwrap();
            let v = g.tape.value(y).unwrap();
            assert_eq!(v.shape(), &[1, 2]);
            assert!(v.is_finite());
        }
    }

    #[test]
    fn wiin_features_and_determinism() {
        let config = WiinConfig::default();
        let build = || {
            let mut store = ParamStore::new();
            let w = Wiin::new(&mut store, "wiin", &config, &mut rng()).unwrap();
            (store, w)
        };
        let (s1, w1) = build();
        let (s2, w2) = build();
        let x = random(&[2, 1, 100, 100], 10);
        let eval = |s: &ParamStore, w: &Wiin| {
            let mut g = Graph::new(s, Mode::Eval, 0);
            let xv = g.tape.constant(x.clone());
            let y = w.forward(&mut g, xv).unwrap();
            WiinOutput::from_tensor(g.tape.value(y).unwrap())
        };
        let out = eval(&s1, &w1);
        assert_eq!(out.len(), 2);
        assert_eq!(out, eval(&s2, &w2));
        assert!(w1.param_count(&s1) > 0);
    }
}
