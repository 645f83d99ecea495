//! Analytic gradients of every differentiable op against central differences.

use firecast_tensor::gradcheck::check_op;
use firecast_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces an arbitrary tensor to a scalar with non-uniform weights so
/// every output entry has a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var) -> firecast_tensor::Result<Var> {
    let shape = tape.shape(y)?.to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(&shape, (0..n).map(|i| ((i as f64) * 0.7).sin() + 0.3).collect())?;
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn assert_ok(name: &str, report: firecast_tensor::gradcheck::GradCheckReport, tol: f64) {
    assert!(
        report.passes(tol),
        "{name}: max rel error {} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

#[test]
fn matmul_sum() {
    let r = check_op(&[random(&[3, 4], 1), random(&[4, 2], 2)], STEP, FLOOR, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        t.sum(y)
    })
    .unwrap();
    assert_eq!(r.checked, 20);
    assert_ok("matmul", r, 1e-5);
}

#[test]
fn batch_matmul_and_transpose() {
    let r = check_op(&[random(&[2, 3, 4], 3), random(&[2, 5, 4], 4)], STEP, FLOOR, |t, v| {
        let bt = t.transpose_last2(v[1])?;
        let y = t.batch_matmul(v[0], bt)?;
        weighted_sum(t, y)
    })
    .unwrap();
    assert_ok("batch_matmul", r, TOL);
}

#[test]
fn elementwise_and_broadcast() {
    let r = check_op(
        &[random(&[2, 3, 4], 5), random(&[3, 4], 6), random(&[2, 3, 4], 7)],
        STEP,
        FLOOR,
        |t, v| {
            let a = t.add_broadcast(v[0], v[1])?;
            let b = t.add(a, v[2])?;
            let c = t.mul(b, v[2])?;
            let d = t.scale(c, -1.7)?;
            weighted_sum(t, d)
        },
    )
    .unwrap();
    assert_ok("elementwise", r, TOL);
}

#[test]
fn layout_ops() {
    let r = check_op(&[random(&[2, 3, 4], 8), random(&[2, 1, 4], 9)], STEP, FLOOR, |t, v| {
        let p = t.permute(v[0], &[2, 0, 1])?;
        let p = t.reshape(p, &[4, 6])?;
        let p = t.reshape(p, &[4, 2, 3])?;
        let back = t.permute(p, &[1, 2, 0])?;
        let c = t.concat(v[1], back, 1)?;
        let n = t.narrow(c, 1, 1, 2)?;
        let m = t.mean(n)?;
        let r = t.repeat_leading(m, 3)?;
        let s = weighted_sum(t, c)?;
        let rs = t.sum(r)?;
        t.add(s, rs)
    })
    .unwrap();
    assert_ok("layout", r, TOL);
}

#[test]
fn activations() {
    let r = check_op(&[random(&[3, 5], 10)], STEP, FLOOR, |t, v| {
        let a = t.gelu(v[0])?;
        let b = t.sigmoid(v[0])?;
        let c = t.relu(v[0])?;
        let s = t.softmax_rows(v[0])?;
        let ab = t.add(a, b)?;
        let abc = t.add(ab, c)?;
        let all = t.add(abc, s)?;
        weighted_sum(t, all)
    })
    .unwrap();
    assert_ok("activations", r, TOL);
}

#[test]
fn layernorm_all_inputs() {
    let r = check_op(
        &[random(&[2, 3, 6], 11), random(&[6], 12), random(&[6], 13)],
        STEP,
        FLOOR,
        |t, v| {
            let y = t.layernorm(v[0], v[1], v[2])?;
            weighted_sum(t, y)
        },
    )
    .unwrap();
    assert_ok("layernorm", r, TOL);
}

#[test]
fn batchnorm_train_and_eval() {
    for eval in [false, true] {
        let r = check_op(
            &[random(&[3, 2, 2, 2], 14), random(&[2], 15), random(&[2], 16)],
            STEP,
            FLOOR,
            |t, v| {
                let running = [0.1, -0.2];
                let var = [1.5, 0.7];
                let stats = eval.then_some((&running[..], &var[..]));
                let (y, _) = t.batchnorm(v[0], v[1], v[2], stats)?;
                weighted_sum(t, y)
            },
        )
        .unwrap();
        assert_ok(if eval { "batchnorm eval" } else { "batchnorm train" }, r, TOL);
    }
}

#[test]
fn batchnorm_on_features() {
    let r = check_op(
        &[random(&[4, 3], 17), random(&[3], 18), random(&[3], 19)],
        STEP,
        FLOOR,
        |t, v| {
            let (y, _) = t.batchnorm(v[0], v[1], v[2], None)?;
            weighted_sum(t, y)
        },
    )
    .unwrap();
    assert_ok("batchnorm 1d", r, TOL);
}

#[test]
fn conv2d_with_bias_stride_padding() {
    let r = check_op(
        &[random(&[2, 2, 7, 6], 20), random(&[3, 2, 3, 3], 21), random(&[3], 22)],
        STEP,
        FLOOR,
        |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
            weighted_sum(t, y)
        },
    )
    .unwrap();
    assert_ok("conv2d", r, TOL);
}

#[test]
fn conv2d_rectangular_kernel() {
    let r = check_op(&[random(&[1, 4, 1, 5], 23), random(&[1, 4, 1, 3], 24)], STEP, FLOOR, |t, v| {
        let y = t.conv2d_with(v[0], v[1], None, (1, 1), (0, 1))?;
        weighted_sum(t, y)
    })
    .unwrap();
    assert_ok("conv1d", r, TOL);
}

#[test]
fn maxpool2d() {
    // Distinct values keep every window's argmax away from a tie.
    let mut x = random(&[2, 2, 6, 6], 25);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v += i as f64 * 0.05;
    }
    let r = check_op(&[x], STEP, FLOOR, |t, v| {
        let y = t.maxpool2d(v[0], 3, 2, 1)?;
        weighted_sum(t, y)
    })
    .unwrap();
    assert_ok("maxpool2d", r, TOL);
}

#[test]
fn dropout_with_fixed_mask() {
    let r = check_op(&[random(&[4, 5], 26)], STEP, FLOOR, |t, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y = t.dropout(v[0], 0.2, &mut rng)?;
        weighted_sum(t, y)
    })
    .unwrap();
    assert_ok("dropout", r, TOL);
}

#[test]
fn mse_loss_gradient() {
    let r = check_op(&[random(&[8], 27), random(&[8], 28)], STEP, FLOOR, |t, v| t.mse_loss(v[0], v[1]))
        .unwrap();
    assert_ok("mse", r, 1e-6);
}

#[test]
fn cross_entropy_gradient() {
    let onehot = Tensor::new(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let r = check_op(&[random(&[4, 2], 29)], STEP, FLOOR, move |t, v| {
        let y = t.constant(onehot.clone());
        t.cross_entropy_loss(v[0], y)
    })
    .unwrap();
    assert_ok("cross entropy", r, 1e-5);
}
