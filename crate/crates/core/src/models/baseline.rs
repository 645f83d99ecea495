//! Fully connected network over the tabular features.

use firecast_tensor::nn::{BatchNorm, Linear};
use firecast_tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error between the sigmoid output and the 0/1 label.
    Mse,
    /// Two-logit softmax head; the probability is the positive column.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub use_batchnorm_on_last_hidden: bool,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            input_dim: 20,
            hidden: vec![256, 128, 64, 32, 4],
            use_batchnorm_on_last_hidden: false,
            loss: LossKind::Mse,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            epochs: 100,
        }
    }
}

impl BaselineConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self { input_dim, ..Self::default() }
    }

    fn head_width(&self) -> usize {
        match self.loss {
            LossKind::Mse => 1,
            LossKind::CrossEntropy => 2,
        }
    }

    fn has_batchnorm(&self, block: usize) -> bool {
        block + 1 < self.hidden.len() || self.use_batchnorm_on_last_hidden
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let mut fan_in = self.input_dim;
        let mut total = 0;
        for (i, &h) in self.hidden.iter().enumerate() {
            total += fan_in * h + h;
            if self.has_batchnorm(i) {
                total += 2 * h;
            }
            fan_in = h;
        }
        total + fan_in * self.head_width() + self.head_width()
    }
}

#[derive(Debug, Clone)]
struct Block {
    linear: Linear,
    norm: Option<BatchNorm>,
}

#[derive(Debug, Clone)]
pub struct BaselineNet {
    blocks: Vec<Block>,
    head: Linear,
    loss: LossKind,
    input_dim: usize,
    params: Vec<ParamId>,
}

/// Forward results: `probabilities` is `[B]`, `head` the raw last layer.
#[derive(Debug, Clone, Copy)]
pub struct BaselineOutput {
    pub probabilities: Var,
    pub head: Var,
}

impl BaselineNet {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        config: &BaselineConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.input_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::Dimension("baseline widths must be positive".into()));
        }
        let first = store.len();
        let mut fan_in = config.input_dim;
        let mut blocks = Vec::new();
        for (i, &h) in config.hidden.iter().enumerate() {
            let linear = Linear::new(store, &format!("{prefix}.fc{i}"), fan_in, h, rng);
            let norm = config
                .has_batchnorm(i)
                .then(|| BatchNorm::new(store, &format!("{prefix}.bn{i}"), h));
            blocks.push(Block { linear, norm });
            fan_in = h;
        }
        let head = Linear::new(store, &format!("{prefix}.head"), fan_in, config.head_width(), rng);
        let params = store.ids().skip(first).collect();
        Ok(Self { blocks, head, loss: config.loss, input_dim: config.input_dim, params })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    /// Every parameter and buffer this network registered.
    pub fn param_ids(&self) -> &[ParamId] {
        &self.params
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        super::count_params(store, &self.params)
    }

    /// `x` is `[B, input_dim]`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<BaselineOutput> {
        let shape = g.tape.shape(x)?.to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Dimension(format!(
                "baseline expects [B, {}], got {shape:?}",
                self.input_dim
            )));
        }
        let batch = shape[0];
        let mut h = x;
        for block in &self.blocks {
            h = block.linear.forward(g, h)?;
            if let Some(norm) = &block.norm {
                h = norm.forward(g, h)?;
            }
            h = g.tape.relu(h)?;
        }
        let head = self.head.forward(g, h)?;
        let probabilities = match self.loss {
            LossKind::Mse => {
                let p = g.tape.sigmoid(head)?;
                g.tape.reshape(p, &[batch])?
            }
            LossKind::CrossEntropy => {
                let p = g.tape.softmax_rows(head)?;
                let p = g.tape.narrow(p, 1, 1, 1)?;
                g.tape.reshape(p, &[batch])?
            }
        };
        Ok(BaselineOutput { probabilities, head })
    }

    /// Training loss against 0/1 `labels`.
    pub fn loss(&self, g: &mut Graph<'_>, out: BaselineOutput, labels: &[f64]) -> Result<Var> {
        let n = labels.len();
        match self.loss {
            LossKind::Mse => {
                let y = g.tape.constant(Tensor::new(&[n], labels.to_vec())?);
                Ok(g.tape.mse_loss(out.probabilities, y)?)
            }
            LossKind::CrossEntropy => {
                let onehot = labels.iter().flat_map(|&l| [1.0 - l, l]).collect();
                let y = g.tape.constant(Tensor::new(&[n, 2], onehot)?);
                Ok(g.tape.cross_entropy_loss(out.head, y)?)
            }
        }
    }
}

/// A standalone tabular model: its parameters and the network over them.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub store: ParamStore,
    pub net: BaselineNet,
}

impl BaselineModel {
    pub fn param_count(&self) -> usize {
        self.net.param_count(&self.store)
    }
}

pub fn init_baseline(config: &BaselineConfig, seed: u64) -> Result<BaselineModel> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = BaselineNet::new(&mut store, "baseline", config, &mut rng)?;
    Ok(BaselineModel { config: config.clone(), store, net })
}

#[cfg(test)]
mod tests {
    use super::*;
    use firecast_tensor::{Mode, TensorError};

    /// Enumerates parameter tensors layer by layer, independent of the
    /// closed form in `param_count`.
    fn enumerate(d: usize) -> usize {
        let widths = [d, 256, 128, 64, 32, 4, 1];
        let mut n = 0;
        for w in widths.windows(2) {
            n += w[0] * w[1] + w[1];
        }
        n + 2 * (256 + 128 + 64 + 32)
    }

    #[test]
    fn reported_parameter_counts() {
        for (d, expect) in [(20, 49705), (14, 48169), (22, 50217)] {
            let model = init_baseline(&BaselineConfig::with_input_dim(d), 0).unwrap();
            assert_eq!(model.param_count(), expect);
            assert_eq!(BaselineConfig::with_input_dim(d).param_count(), expect);
            assert_eq!(enumerate(d), expect);
            let closed = (d * 256 + 256) + 512 + 33152 + 8384 + 2144 + 132 + 5;
            assert_eq!(closed, expect);
        }
    }

    #[test]
    fn single_linear_has_two_params() {
        let config = BaselineConfig { input_dim: 1, hidden: vec![], ..BaselineConfig::default() };
        assert_eq!(init_baseline(&config, 0).unwrap().param_count(), 2);
        assert_eq!(config.param_count(), 2);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = init_baseline(&BaselineConfig::default(), 9).unwrap();
        let b = init_baseline(&BaselineConfig::default(), 9).unwrap();
        let c = init_baseline(&BaselineConfig::default(), 10).unwrap();
        let data = |m: &BaselineModel| -> Vec<f64> {
            m.store.entries().iter().flat_map(|e| e.tensor.data().to_vec()).collect()
        };
        assert_eq!(data(&a), data(&b));
        assert_ne!(data(&a), data(&c));
    }

    fn run(model: &BaselineModel, x: Tensor, mode: Mode) -> Result<Vec<f64>> {
        let mut g = Graph::new(&model.store, mode, 0);
        let x = g.tape.constant(x);
        let out = model.net.forward(&mut g, x)?;
        Ok(g.tape.value(out.probabilities)?.data().to_vec())
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut model = init_baseline(&BaselineConfig::default(), 1).unwrap();
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            if model.store.is_trainable(id) && !model.store.name(id).ends_with("gamma") {
                model.store.get_mut(id).data_mut().fill(0.0);
            }
        }
        let x = Tensor::new(&[3, 20], (0..60).map(|i| i as f64 - 30.0).collect()).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(run(&model, x.clone(), mode).unwrap(), [0.5; 3]);
        }
    }

    #[test]
    fn outputs_are_probabilities() {
        for loss in [LossKind::Mse, LossKind::CrossEntropy] {
            let config = BaselineConfig { loss, ..BaselineConfig::default() };
            let model = init_baseline(&config, 2).unwrap();
            let x = Tensor::new(&[4, 20], (0..80).map(|i| (i as f64 * 0.37).sin() * 50.0).collect()).unwrap();
            for p in run(&model, x, Mode::Train).unwrap() {
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn shape_and_batch_errors() {
        let model = init_baseline(&BaselineConfig::default(), 3).unwrap();
        let wrong = Tensor::zeros(&[2, 14]);
        assert!(matches!(run(&model, wrong, Mode::Eval), Err(Error::Dimension(_))));
        let single = Tensor::zeros(&[1, 20]);
        assert!(matches!(
            run(&model, single.clone(), Mode::Train),
            Err(Error::Tensor(TensorError::BatchSize { .. }))
        ));
        assert!(run(&model, single, Mode::Eval).is_ok());
    }
}
