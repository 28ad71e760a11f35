//! Finite-difference checks for every differentiable op on the tape.

use fusemod_tensor::{
    grad_check, grad_check_with, Conv2dConfig, GradCheckConfig, PoolConfig, Shape, Tape, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn randn(shape: Shape, seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn conv2d_small() {
    let x = randn(Shape::new(1, 2, 4, 4), 1);
    let w = randn(Shape::new(3, 2, 3, 3), 2);
    let b = randn(Shape::vector(3), 3);
    let err = grad_check(
        |t, v| t.conv2d(v[0], v[1], Some(v[2]), Conv2dConfig::new(1, 1, 1)),
        &[x, w, b],
        H,
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn conv2d_strided_grouped() {
    let x = randn(Shape::new(2, 4, 8, 8), 4);
    for (cfg, seed) in [
        (Conv2dConfig::new(2, 1, 2), 5),
        (Conv2dConfig::new(1, 1, 4), 6),
        (Conv2dConfig::new(2, 0, 1), 7),
    ] {
        let w = randn(Shape::new(4, 4 / cfg.groups, 3, 3), seed);
        let err = grad_check(|t, v| t.conv2d(v[0], v[1], None, cfg), &[x.clone(), w], H).unwrap();
        assert!(err < TOL, "{cfg:?}: {err}");
    }
}

#[test]
fn pointwise_group_conv() {
    let x = randn(Shape::new(2, 8, 4, 4), 8);
    let w = randn(Shape::new(4, 4, 1, 1), 9);
    let err = grad_check(|t, v| t.conv2d(v[0], v[1], None, Conv2dConfig::new(1, 0, 2)), &[x, w], H).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn transposed_conv2d() {
    let x = randn(Shape::new(2, 3, 4, 4), 10);
    for (k, s, p) in [(4, 2, 1), (16, 8, 4), (3, 1, 0)] {
        let w = randn(Shape::new(3, 2, k, k), 11 + k as u64);
        let err = grad_check(|t, v| t.transposed_conv2d(v[0], v[1], s, p), &[x.clone(), w], H).unwrap();
        assert!(err < TOL, "k{k}: {err}");
    }
}

#[test]
fn batch_norm_train_and_eval() {
    let x = randn(Shape::new(2, 3, 4, 4), 12);
    let g = randn(Shape::vector(3), 13);
    let b = randn(Shape::vector(3), 14);
    let err = grad_check(
        |t, v| t.batch_norm_train(v[0], v[1], v[2], 1e-5),
        &[x.clone(), g.clone(), b.clone()],
        H,
    )
    .unwrap();
    assert!(err < TOL, "train {err}");

    let rm = randn(Shape::vector(3), 15);
    let rv = randn(Shape::vector(3), 16).map(|v| v * v + 0.5);
    let err = grad_check(
        |t, v| t.batch_norm_eval(v[0], v[1], v[2], &rm, &rv, 1e-5),
        &[x, g, b],
        H,
    )
    .unwrap();
    assert!(err < TOL, "eval {err}");
}

#[test]
fn relu_away_from_kink() {
    let x = randn(Shape::new(2, 3, 4, 4), 17).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let err = grad_check(|t, v| Ok(t.relu(v[0])), &[x], H).unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn pooling() {
    let x = randn(Shape::new(2, 3, 8, 8), 18);
    let cfg = PoolConfig::new(3, 2, 1);
    let err = grad_check(|t, v| t.max_pool(v[0], cfg), std::slice::from_ref(&x), H).unwrap();
    assert!(err < TOL, "max {err}");
    let err = grad_check(|t, v| t.avg_pool(v[0], cfg), &[x], H).unwrap();
    assert!(err < TOL, "avg {err}");
}

#[test]
fn concat_add_shuffle() {
    let a = randn(Shape::new(2, 3, 4, 4), 19);
    let b = randn(Shape::new(2, 3, 4, 4), 20);
    let err = grad_check(
        |t, v| {
            let c = t.concat_channels(&[v[0], v[1]])?;
            let s = t.channel_shuffle(c, 2)?;
            let r = t.concat_channels(&[v[1], v[0]])?;
            t.add(s, r)
        },
        &[a, b],
        H,
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn pad_and_crop() {
    let x = randn(Shape::new(2, 2, 5, 6), 23);
    let err = grad_check(
        |t, v| {
            let grown = t.fit_spatial(v[0], 7, 8);
            let shrunk = t.fit_spatial(grown, 3, 8);
            Ok(shrunk)
        },
        &[x],
        H,
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn weighted_cross_entropy() {
    let logits = randn(Shape::new(2, 2, 4, 4), 21);
    let targets: Vec<u8> = (0..32).map(|i| u8::from(i % 5 == 0)).collect();
    let err = grad_check(
        |t, v| t.weighted_cross_entropy(v[0], &targets, &[0.4, 3.0]),
        &[logits],
        H,
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn conv_bn_relu_tconv_chain() {
    let x = randn(Shape::new(2, 3, 8, 8), 22);
    let w = randn(Shape::new(4, 3, 3, 3), 23);
    let g = randn(Shape::vector(4), 24);
    let b = randn(Shape::vector(4), 25);
    let wt = randn(Shape::new(4, 2, 4, 4), 26);
    let report = grad_check_with(
        |t, v| {
            let y = t.conv2d(v[0], v[1], None, Conv2dConfig::new(2, 1, 1))?;
            let y = t.batch_norm_train(y, v[2], v[3], 1e-5)?;
            let y = t.relu(y);
            t.transposed_conv2d(y, v[4], 2, 1)
        },
        &[x, w, g, b, wt],
        GradCheckConfig { h: H, ..GradCheckConfig::default() },
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
    assert_eq!(report.coords_checked, 2 * 3 * 64 + 4 * 27 + 4 + 4 + 4 * 2 * 16);
}

#[test]
fn gradient_of_unused_input_is_zero() {
    let x = randn(Shape::new(1, 1, 2, 2), 27);
    let y = randn(Shape::new(1, 1, 2, 2), 28);
    let err = grad_check(|t, v| Ok(t.relu(v[0])), &[x, y], H).unwrap();
    assert!(err < TOL);
}

#[test]
fn tape_records_batch_stats() {
    let mut tape = Tape::new();
    let x = tape.leaf(randn(Shape::new(2, 2, 3, 3), 29));
    let g = tape.leaf(Tensor::full(Shape::vector(2), 1.0));
    let b = tape.leaf(Tensor::zeros(Shape::vector(2)));
    let y = tape.batch_norm_train(x, g, b, 1e-5).unwrap();
    let stats = tape.batch_stats(y).unwrap();
    assert_eq!(stats.count, 18);
    assert!(tape.batch_stats(x).is_none());
}
