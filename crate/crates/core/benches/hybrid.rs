//! Hybrid-model throughput with and without data-parallel dispatch.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use firecast_core::data::synthetic::brightness_tiles;
use firecast_core::models::{HybridConfig, HybridModel};
use firecast_core::train::{predict, Trainable};
use firecast_tensor::{par, Graph, Mode};

fn run<R>(sequential: bool, f: impl FnOnce() -> R) -> R {
    if sequential { par::sequential(f) } else { f() }
}

fn hybrid(c: &mut Criterion) {
    let data = brightness_tiles(32, 100, 20, 0);
    let model = HybridModel::new(&HybridConfig::default(), 0).unwrap();
    let rows: Vec<usize> = (0..32).collect();
    let labels = data.label_values(&rows);

    let mut group = c.benchmark_group("hybrid_batch32");
    group.sample_size(10);
    for (name, seq) in [("parallel", false), ("sequential", true)] {
        group.bench_function(BenchmarkId::new("train_step", name), |b| {
            b.iter(|| {
                run(seq, || {
                    let mut g = Graph::new(&model.store, Mode::Train, 0);
                    let out = model.forward_rows(&mut g, &data, &rows).unwrap();
                    let loss = model.loss(&mut g, out, &labels).unwrap();
                    g.backward(loss).unwrap();
                    black_box(g.finish().unwrap().grads.len())
                })
            })
        });
        group.bench_function(BenchmarkId::new("predict", name), |b| {
            b.iter(|| run(seq, || black_box(predict(&model, &data).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, hybrid);
criterion_main!(benches);
