pub mod baseline;
pub mod hybrid;
pub mod wiin;

pub use baseline::{init_baseline, BaselineConfig, BaselineModel, BaselineNet, BaselineOutput, LossKind};
pub use hybrid::{classify, fuse_features, HybridConfig, HybridModel};
pub use wiin::{ResNet, ResNetConfig, Wiin, WiinConfig, WiinOutput, Wit, WitConfig};

use firecast_tensor::ParamId;
use firecast_tensor::ParamStore;

/// Trainable scalars among `ids`.
pub fn count_params(store: &ParamStore, ids: &[ParamId]) -> usize {
    ids.iter()
        .filter(|&&id| store.is_trainable(id))
        .map(|&id| store.get(id).numel())
        .sum()
}

/// Either trained network, as stored in a checkpoint.
#[derive(Debug, Clone)]
pub enum Model {
    Baseline(BaselineModel),
    Hybrid(HybridModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Baseline(_) => "baseline",
            Model::Hybrid(_) => "hybrid",
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            Model::Baseline(m) => &m.store,
            Model::Hybrid(m) => &m.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::Baseline(m) => &mut m.store,
            Model::Hybrid(m) => &mut m.store,
        }
    }

    pub fn param_count(&self) -> usize {
        self.store().param_count()
    }

    pub fn needs_images(&self) -> bool {
        matches!(self, Model::Hybrid(_))
    }
}
