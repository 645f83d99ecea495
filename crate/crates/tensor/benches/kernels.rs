//! Parallel vs sequential dispatch for the heavy kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use firecast_tensor::{par, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn run<R>(sequential: bool, f: impl FnOnce() -> R) -> R {
    if sequential { par::sequential(f) } else { f() }
}

fn conv(c: &mut Criterion) {
    let x = random(&[32, 16, 26, 26], 1);
    let w = random(&[16, 16, 3, 3], 2);
    let mut group = c.benchmark_group("conv2d_fwd_bwd");
    group.sample_size(10);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                run(seq, || {
                    let mut t = Tape::new();
                    let (xv, wv) = (t.variable(x.clone()), t.variable(w.clone()));
                    let y = t.conv2d(xv, wv, None, 1, 1).unwrap();
                    let s = t.sum(y).unwrap();
                    t.backward(s).unwrap();
                    black_box(t.grad(wv).unwrap().map(|g| g[0]))
                })
            })
        });
    }
    group.finish();
}

fn matmul(c: &mut Criterion) {
    let a = random(&[32, 26, 64], 3);
    let b = random(&[32, 64, 26], 4);
    let mut group = c.benchmark_group("batch_matmul_fwd_bwd");
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| {
                run(seq, || {
                    let mut t = Tape::new();
                    let (av, bv) = (t.variable(a.clone()), t.variable(b.clone()));
                    let y = t.batch_matmul(av, bv).unwrap();
                    let s = t.sum(y).unwrap();
                    t.backward(s).unwrap();
                    black_box(t.grad(av).unwrap().map(|g| g[0]))
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conv, matmul);
criterion_main!(benches);
