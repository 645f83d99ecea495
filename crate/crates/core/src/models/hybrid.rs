//! Image features fused into the tabular network and trained jointly.

use firecast_tensor::{Graph, ParamStore, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{BaselineConfig, BaselineNet, BaselineOutput, LossKind};
use super::wiin::{Wiin, WiinConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub tabular_width: usize,
    pub wiin: WiinConfig,
    pub hidden: Vec<usize>,
    pub loss: LossKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        let base = BaselineConfig::default();
        Self {
            tabular_width: 20,
            wiin: WiinConfig::default(),
            hidden: base.hidden,
            loss: base.loss,
            batch_size: 32,
            epochs: 100,
            threshold: 0.5,
            learning_rate: base.learning_rate,
            weight_decay: base.weight_decay,
        }
    }
}

impl HybridConfig {
    pub fn fused_width(&self) -> usize {
        self.tabular_width + 2
    }

    pub fn head_config(&self) -> BaselineConfig {
        BaselineConfig {
            input_dim: self.fused_width(),
            hidden: self.hidden.clone(),
            loss: self.loss,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            ..BaselineConfig::default()
        }
    }
}

/// `[B, d]` and `[B, 2]` to `[B, d + 2]`, image features last.
pub fn fuse_features(g: &mut Graph<'_>, tabular: Var, wiin_out: Var) -> Result<Var> {
    let (st, sw) = (g.tape.shape(tabular)?.to_vec(), g.tape.shape(wiin_out)?.to_vec());
    if st.len() != 2 || sw.len() != 2 || sw[1] != 2 || st[0] != sw[0] {
        return Err(Error::Dimension(format!("cannot fuse {st:?} with {sw:?}")));
    }
    Ok(g.tape.concat(tabular, wiin_out, 1)?)
}

/// Decision rule: positive only when strictly above the threshold.
pub fn classify(p: f64, threshold: f64) -> bool {
    p > threshold
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub config: HybridConfig,
    pub store: ParamStore,
    pub wiin: Wiin,
    pub head: BaselineNet,
}

impl HybridModel {
    pub fn new(config: &HybridConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wiin = Wiin::new(&mut store, "wiin", &config.wiin, &mut rng)?;
        let head = BaselineNet::new(&mut store, "head", &config.head_config(), &mut rng)?;
        Ok(Self { config: config.clone(), store, wiin, head })
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn wiin_param_count(&self) -> usize {
        self.wiin.param_count(&self.store)
    }

    pub fn head_param_count(&self) -> usize {
        self.head.param_count(&self.store)
    }

    /// `tabular` is `[B, d]`, `images` `[B, 1, S, S]`.
    pub fn forward(&self, g: &mut Graph<'_>, tabular: Var, images: Var) -> Result<BaselineOutput> {
        let (bt, bi) = (g.tape.shape(tabular)?[0], g.tape.shape(images)?[0]);
        if bt != bi {
            return Err(Error::Dimension(format!("{bt} tabular rows but {bi} images")));
        }
        let features = self.wiin.forward(g, images)?;
        let fused = fuse_features(g, tabular, features)?;
        self.head.forward(g, fused)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use firecast_tensor::{Mode, Tensor};

    #[test]
    fn threshold_is_strict() {
        assert!(!classify(0.5, 0.5));
        assert!(classify(0.51, 0.5));
        assert!(!classify(0.0, 0.5));
        assert!(!classify(0.7, 0.7));
    }

    #[test]
    fn fusion_layout() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Eval, 0);
        let tab: Vec<f64> = (0..40).map(|i| i as f64 * 0.25 - 3.0).collect();
        let t = g.tape.constant(Tensor::new(&[2, 20], tab.clone()).unwrap());
        let w = g.tape.constant(Tensor::zeros(&[2, 2]));
        let f = fuse_features(&mut g, t, w).unwrap();
        let v = g.tape.value(f).unwrap();
        assert_eq!(v.shape(), &[2, 22]);
        for r in 0..2 {
            assert_eq!(&v.data()[r * 22..r * 22 + 20], &tab[r * 20..r * 20 + 20]);
            assert_eq!(&v.data()[r * 22 + 20..r * 22 + 22], &[0.0, 0.0]);
        }
        let w3 = g.tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(fuse_features(&mut g, t, w3), Err(Error::Dimension(_))));
    }

    #[test]
    fn parameter_totals_add_up() {
        let model = HybridModel::new(&HybridConfig::default(), 0).unwrap();
        assert_eq!(model.head_param_count(), 50217);
        assert_eq!(model.param_count(), model.wiin_param_count() + model.head_param_count());
        let wider = HybridConfig { tabular_width: 21, ..HybridConfig::default() };
        assert_eq!(wider.fused_width(), 23);
    }
}
