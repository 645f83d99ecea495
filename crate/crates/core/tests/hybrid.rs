//! Behavioural checks on the fused network.

mod support;

use firecast_core::data::synthetic::brightness_tiles;
use firecast_core::train::{predict, Trainable};
use firecast_tensor::{Graph, Mode};
use support::*;

#[test]
fn gradient_reaches_both_branches() {
    let data = brightness_tiles(4, 100, 3, 1);
    let model = tiny_hybrid(3, 2);
    let store = model.store();
    let rows = [0, 1, 2, 3];
    let mut g = Graph::new(store, Mode::Train, 0);
    let out = model.forward_rows(&mut g, &data, &rows).unwrap();
    let loss = model.loss(&mut g, out, &data.label_values(&rows)).unwrap();
    g.backward(loss).unwrap();
    let step = g.finish().unwrap();
    let norm = |prefix: &str| -> f64 {
        step.grads
            .iter()
            .filter(|(id, _)| store.name(*id).starts_with(prefix))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    };
    for prefix in ["wiin.resnet", "wiin.wit", "head."] {
        assert!(norm(prefix) > 1e-10, "no gradient under {prefix}");
    }
}

#[test]
fn eval_rows_are_independent() {
    let data = brightness_tiles(6, 100, 3, 4);
    let model = tiny_hybrid(3, 5);
    let before = predict(&model, &data).unwrap();
    let mut changed = data.clone();
    let imgs = changed.images.as_mut().unwrap();
    imgs[2] = firecast_core::data::GrayImage::filled(100, 100, 0.9).unwrap();
    changed.features[2 * 3] += 5.0;
    let after = predict(&model, &changed).unwrap();
    for i in 0..6 {
        if i == 2 {
            assert_ne!(before[i], after[i]);
        } else {
            assert_eq!(before[i].to_bits(), after[i].to_bits(), "row {i} moved");
        }
    }
}

#[test]
fn eval_is_repeatable() {
    let data = brightness_tiles(5, 100, 3, 8);
    let model = tiny_hybrid(3, 9);
    assert_eq!(predict(&model, &data).unwrap(), predict(&model, &data).unwrap());
}

#[test]
fn image_features_influence_prediction() {
    let data = brightness_tiles(2, 100, 3, 10);
    let model = tiny_hybrid(3, 11);
    let mut bright = data.clone();
    for img in bright.images.as_mut().unwrap() {
        *img = firecast_core::data::GrayImage::filled(100, 100, 1.0).unwrap();
    }
    let (a, b) = (predict(&model, &data).unwrap(), predict(&model, &bright).unwrap());
    assert_ne!(a, b);
}
