//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use firecast_core::data::Dataset;
use firecast_core::models::{HybridConfig, HybridModel, ResNetConfig, WiinConfig, WitConfig};
use firecast_core::train::Trainable;
use firecast_tensor::gradcheck::{check_params, GradCheckReport};
use firecast_tensor::{Graph, Mode, ParamId, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;

/// Train-mode loss of `model` on `rows`, evaluated against `store`.
pub fn loss_with<M: Trainable>(model: &M, store: &ParamStore, data: &Dataset, rows: &[usize], seed: u64) -> f64 {
    let mut g = Graph::new(store, Mode::Train, seed);
    let out = model.forward_rows(&mut g, data, rows).unwrap();
    let loss = model.loss(&mut g, out, &data.label_values(rows)).unwrap();
    g.tape.value(loss).unwrap().item()
}

/// Backpropagates once, then compares `picks` against central differences.
pub fn gradcheck_model<M: Trainable>(
    model: &M,
    data: &Dataset,
    rows: &[usize],
    picks: &[(ParamId, usize)],
    seed: u64,
) -> GradCheckReport {
    let mut store = model.store().clone();
    {
        let mut g = Graph::new(&store, Mode::Train, seed);
        let out = model.forward_rows(&mut g, data, rows).unwrap();
        let loss = model.loss(&mut g, out, &data.label_values(rows)).unwrap();
        g.backward(loss).unwrap();
        let step = g.finish().unwrap();
        // keep only gradients; running statistics do not affect train-mode loss
        store.apply(firecast_tensor::StepOutput { grads: step.grads, stats: Vec::new() }).unwrap();
    }
    check_params(&mut store, picks, STEP, FLOOR, |s| Ok(loss_with(model, s, data, rows, seed))).unwrap()
}

/// `per_tensor` random coordinates from every trainable tensor whose name
/// passes `filter`.
pub fn sample_picks(store: &ParamStore, per_tensor: usize, seed: u64, filter: impl Fn(&str) -> bool) -> Vec<(ParamId, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store
        .ids()
        .filter(|&id| store.is_trainable(id) && filter(store.name(id)))
        .flat_map(|id| {
            let n = store.get(id).numel();
            (0..per_tensor.min(n)).map(|_| (id, rng.gen_range(0..n))).collect::<Vec<_>>()
        })
        .collect()
}

/// Small hybrid: narrow ResNet, `D = 8`, two heads.
pub fn tiny_hybrid_config(tabular_width: usize) -> HybridConfig {
    HybridConfig {
        tabular_width,
        wiin: WiinConfig {
            resnet: ResNetConfig { input_size: 100, stem_channels: 2, block1_channels: 2, block2_channels: 4 },
            wit: WitConfig { hidden: 8, heads: 2, mlp: 4, ..WitConfig::default() },
        },
        hidden: vec![16, 8],
        ..HybridConfig::default()
    }
}

pub fn tiny_hybrid(tabular_width: usize, seed: u64) -> HybridModel {
    HybridModel::new(&tiny_hybrid_config(tabular_width), seed).unwrap()
}
