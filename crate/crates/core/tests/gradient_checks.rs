//! Central-difference checks for every layer kind of the tensor engine.

mod common;

use common::layers::*;
use infodemic::tensor::{AdamConfig, AdamState, Gradients, ParamStore, Tensor};

#[test]
fn dense_layers_match_central_differences() {
    for seed in 0..20 {
        let e = check_dense(seed);
        assert!(e < 1e-6, "seed {seed}: {e:e}");
        let e = check_sparse_dense(seed);
        assert!(e < 1e-6, "seed {seed}: {e:e}");
    }
}

#[test]
fn conv_embedding_pool_match_central_differences() {
    for seed in 0..20 {
        let e = check_conv_pool(seed);
        assert!(e < 1e-6, "seed {seed}: {e:e}");
    }
}

#[test]
fn concat_and_dropout_match_central_differences() {
    for seed in 0..20 {
        let e = check_concat_dropout(seed);
        assert!(e < 1e-6, "seed {seed}: {e:e}");
    }
}

#[test]
fn gru_matches_central_differences() {
    for seed in 0..20 {
        let e = check_recurrent(seed, false);
        assert!(e < 1e-5, "seed {seed}: {e:e}");
    }
}

#[test]
fn lstm_matches_central_differences() {
    for seed in 0..20 {
        let e = check_recurrent(seed, true);
        assert!(e < 1e-5, "seed {seed}: {e:e}");
    }
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    for seed in 0..5 {
        let r = loss_identity(seed);
        assert!(r.uniform_error < 1e-9, "{}", r.uniform_error);
        assert!(r.analytic_error < 1e-15, "{}", r.analytic_error);
        assert!(r.numeric_error < 1e-7, "{}", r.numeric_error);
    }
}

#[test]
fn adam_minimizes_square() {
    let mut store = ParamStore::new();
    let w = store.add("scalar", "w", Tensor::new(vec![1], vec![1.0]).unwrap());
    let mut adam = AdamState::new(
        &store,
        AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        },
    );
    // Oracle: the scalar Adam recurrence written out directly.
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for step in 1..=200 {
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(w)[0] = 2.0 * store.get(w).data()[0];
        adam.step(&mut store, &grads).unwrap();
        let g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9f64.powi(step));
        let v_hat = v / (1.0 - 0.999f64.powi(step));
        x -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
    }
    let final_w = store.get(w).data()[0];
    assert!(final_w.abs() < 0.05, "w = {final_w}");
    assert!((final_w - x).abs() < 1e-12);
}
