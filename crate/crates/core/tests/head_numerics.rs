//! Numerical checks of the head: gradients against finite differences,
//! softmax normalization, dropout statistics.

use actionsense::head::{
    backward, cross_entropy_loss, dropout_mask, forward, init_head, softmax_rows, Mode,
};
use actionsense::seed::rng_for;
use actionsense::{HeadConfig, HeadNetwork};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn small_config(seed: u64) -> HeadConfig {
    HeadConfig {
        input_dim: 10,
        hidden_widths: [8, 6, 5, 4],
        output_dim: 3,
        dropout_rate: 0.0,
        seed,
    }
}

fn loss_of(net: &HeadNetwork, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let mut rng = rng_for(0, 0);
    let (p, _) = forward(net, x.view(), Mode::Infer, &mut rng).unwrap();
    cross_entropy_loss(&p, t).unwrap()
}

/// Max over all parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
fn max_relative_gradient_error(seed: u64) -> f64 {
    let mut net = init_head(&small_config(seed)).unwrap();
    let mut rng = rng_for(seed, 99);
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    let x = Array2::from_shape_simple_fn((5, 10), || rng.random_range(-1.0..1.0));
    let mut t = Array2::zeros((5, 3));
    for i in 0..5 {
        t[[i, rng.random_range(0..3)]] = 1.0;
    }
    let (p, cache) = forward(&net, x.view(), Mode::Train, &mut rng).unwrap();
    let grads = backward(&net, &cache, &p, &t).unwrap();

    let h = 1e-4;
    let mut worst = 0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.layers[l].weights[[i, j]];
                net.layers[l].weights[[i, j]] = orig + h;
                let up = loss_of(&net, &x, &t);
                net.layers[l].weights[[i, j]] = orig - h;
                let down = loss_of(&net, &x, &t);
                net.layers[l].weights[[i, j]] = orig;
                worst = worst.max(rel(grads.weights[l][[i, j]], (up - down) / (2.0 * h)));
            }
        }
        for j in 0..net.layers[l].bias.len() {
            let orig = net.layers[l].bias[j];
            net.layers[l].bias[j] = orig + h;
            let up = loss_of(&net, &x, &t);
            net.layers[l].bias[j] = orig - h;
            let down = loss_of(&net, &x, &t);
            net.layers[l].bias[j] = orig;
            worst = worst.max(rel(grads.biases[l][j], (up - down) / (2.0 * h)));
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    for seed in [1, 2, 3] {
        let err = max_relative_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn softmax_survives_extreme_logits() {
    let mut rng = rng_for(5, 0);
    let logits = Array2::from_shape_simple_fn((10_000, 3), || {
        let scale = [1.0, 1e2, 1e4][rng.random_range(0..3)];
        rng.random_range(-1.0..1.0) * scale
    });
    let p = softmax_rows(&logits);
    for row in p.rows() {
        assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((row.sum() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn dropout_keep_frequency() {
    let mut rng = rng_for(11, 0);
    let m = dropout_mask(10_000, 16, 0.5, &mut rng);
    for col in m.columns() {
        let keep = col.iter().filter(|&&v| v != 0.0).count() as f64 / col.len() as f64;
        assert!((0.48..=0.52).contains(&keep), "{keep}");
        assert!(col.iter().all(|&v| v == 0.0 || v == 2.0));
    }
    assert!((m.mean().unwrap() - 1.0).abs() <= 0.02);
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(row in prop::collection::vec(-50.0f64..50.0, 2..8), shift in -1e3f64..1e3) {
        let a = Array2::from_shape_vec((1, row.len()), row.clone()).unwrap();
        let b = a.mapv(|v| v + shift);
        let (pa, pb) = (softmax_rows(&a), softmax_rows(&b));
        for (x, y) in pa.iter().zip(pb.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn infer_mode_is_repeatable(seed in 0u64..1000, rows in 1usize..6) {
        let net = init_head(&HeadConfig { dropout_rate: 0.5, ..small_config(seed) }).unwrap();
        let mut rng = rng_for(seed, 1);
        let x = Array2::from_shape_simple_fn((rows, 10), || rng.random_range(-2.0..2.0));
        let a = net.predict_proba(x.view()).unwrap();
        let b = net.predict_proba(x.view()).unwrap();
        prop_assert_eq!(&a, &b);
        for row in a.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
