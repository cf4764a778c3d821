use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>())
}

#[test]
fn dense_identity_and_hand_matmul() {
    let mut store = ParamStore::new();
    let w = store.add("d", "W", t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = store.add("d", "b", Tensor::zeros(&[2]));
    let w2 = store.add("d2", "W", t(&[2, 1], &[1.0, 1.0]));
    let b2 = store.add("d2", "b", Tensor::zeros(&[1]));
    let mut g = Graph::new(&store);
    let x = g.input(t(&[1, 2], &[1.0, -2.0]));
    let (wn, bn) = (g.param(w), g.param(b));
    let y = g.dense(x, wn, bn, false).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, -2.0]);
    let x2 = g.input(t(&[1, 2], &[1.0, 2.0]));
    let (wn2, bn2) = (g.param(w2), g.param(b2));
    let y2 = g.dense(x2, wn2, bn2, false).unwrap();
    assert_eq!(g.value(y2).data(), &[3.0]);
    assert!(g.dense(x2, wn2, bn, false).is_err());
}

#[test]
fn dropout_modes() {
    let store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = Graph::new(&store);
    let x = g.input(t(&[1, 3], &[1.0, 2.0, 3.0]));
    assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.7, false, &mut rng).unwrap(), x);
    assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
    let big = g.input(Tensor::new(vec![100_000], vec![1.0; 100_000]).unwrap());
    let y = g.dropout(big, 0.5, true, &mut rng).unwrap();
    let mean = g.value(y).data().iter().sum::<f64>() / 100_000.0;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
}

#[test]
fn conv_hand_cases() {
    let mut store = ParamStore::new();
    let k1 = store.add("c", "K", t(&[1, 1, 1], &[1.0]));
    let k2 = store.add("c", "K2", t(&[2, 1, 1], &[1.0, 1.0]));
    let b = store.add("c", "b", Tensor::zeros(&[1]));
    let mut g = Graph::new(&store);
    let x = g.input(t(&[1, 3, 1], &[-1.0, 2.0, 3.0]));
    let (k1n, k2n, bn) = (g.param(k1), g.param(k2), g.param(b));
    let y = g.conv1d(x, k1n, bn).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 2.0, 3.0]);
    let x2 = g.input(t(&[1, 3, 1], &[1.0, 2.0, 3.0]));
    let y2 = g.conv1d(x2, k2n, bn).unwrap();
    assert_eq!(g.value(y2).data(), &[3.0, 5.0]);
    let short = g.input(t(&[1, 1, 1], &[1.0]));
    assert!(g.conv1d(short, k2n, bn).is_err());
}

#[test]
fn pooling_hand_cases() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(t(&[1, 4, 1], &[1.0, 3.0, 5.0, 7.0]));
    let y = g.avg_pool(x, Pool::Fixed(2)).unwrap();
    assert_eq!(g.value(y).data(), &[2.0, 6.0]);
    let c = g.input(t(&[1, 3, 2], &[4.0, 1.0, 4.0, 1.0, 4.0, 1.0]));
    let yc = g.avg_pool(c, Pool::Fixed(3)).unwrap();
    assert_eq!(g.value(yc).data(), &[4.0, 1.0]);
    let x3 = g.input(t(&[1, 3, 1], &[1.0, 2.0, 3.0]));
    let gl = g.avg_pool(x3, Pool::Global).unwrap();
    assert_eq!(g.value(gl).data(), &[2.0]);
    assert!(g.avg_pool(x3, Pool::Fixed(4)).is_err());
}

fn recurrent_store(kind: &str, inp: usize, hidden: usize, zero: bool, rng: &mut ChaCha8Rng) -> (ParamStore, [ParamId; 3]) {
    let gates = if kind == "gru" { 3 } else { 4 };
    let mut store = ParamStore::new();
    let mk = |rng: &mut ChaCha8Rng, shape: &[usize]| if zero { Tensor::zeros(shape) } else { random(rng, shape, 0.5) };
    let wx = store.add(kind, "Wx", mk(rng, &[inp, gates * hidden]));
    let wh = store.add(kind, "Wh", mk(rng, &[hidden, gates * hidden]));
    let b = store.add(kind, "b", mk(rng, &[gates * hidden]));
    (store, [wx, wh, b])
}

fn run_recurrent(
    g: &mut Graph,
    kind: &str,
    x: NodeId,
    ids: [ParamId; 3],
    lengths: Option<Vec<usize>>,
    seq: bool,
) -> NodeId {
    let (wx, wh, b) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]));
    if kind == "gru" {
        g.gru(x, wx, wh, b, lengths, seq).unwrap()
    } else {
        g.lstm(x, wx, wh, b, lengths, seq).unwrap()
    }
}

#[test]
fn zero_recurrent_params_give_zero_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in ["gru", "lstm"] {
        let (store, ids) = recurrent_store(kind, 3, 4, true, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.input(random(&mut rng, &[2, 5, 3], 1.0));
        let y = run_recurrent(&mut g, kind, x, ids, None, true);
        assert_eq!(g.value(y).shape(), &[2, 5, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn lstm_outputs_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut store, ids) = recurrent_store("lstm", 3, 4, false, &mut rng);
    store.get_mut(ids[0]).data_mut().iter_mut().for_each(|v| *v *= 40.0);
    let mut g = Graph::new(&store);
    let x = g.input(random(&mut rng, &[2, 6, 3], 3.0));
    let y = run_recurrent(&mut g, "lstm", x, ids, None, true);
    assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn masked_steps_carry_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in ["gru", "lstm"] {
        let (store, ids) = recurrent_store(kind, 2, 3, false, &mut rng);
        let xs = random(&mut rng, &[1, 4, 2], 1.0);
        let mut g = Graph::new(&store);
        let x = g.input(xs.clone());
        let masked = run_recurrent(&mut g, kind, x, ids, Some(vec![2]), false);
        let prefix = g.input(t(&[1, 2, 2], &xs.data()[..4]));
        let short = run_recurrent(&mut g, kind, prefix, ids, None, false);
        assert_eq!(g.value(masked).data(), g.value(short).data());
    }
}

#[test]
fn uniform_logits_give_ln2() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let l = g.input(t(&[3, 2], &[0.0, 0.0, 1.5, 1.5, -2.0, -2.0]));
    let loss = g.softmax_cross_entropy(l, &[0, 1, 1]).unwrap();
    assert!((g.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-12);
    let sure = g.input(t(&[1, 2], &[0.0, 800.0]));
    let zero = g.softmax_cross_entropy(sure, &[1]).unwrap();
    assert_eq!(g.value(zero).item(), 0.0);
    assert!(matches!(g.softmax_cross_entropy(l, &[0, 2, 1]), Err(Error::LabelOutOfRange(2))));
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<f64> = (0..40).map(|_| rng.random_range(-30.0..30.0)).collect();
    for row in softmax_rows(&data, 4).chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut store = ParamStore::new();
    let w = store.add("l", "w", t(&[2], &[0.3, -0.7]));
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let zero = Gradients::zeros_like(&store);
    adam.step(&mut store, &zero).unwrap();
    assert_eq!(store.get(w).data(), &[0.3, -0.7]);
}

#[test]
fn adam_moves_against_constant_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("l", "w", t(&[1], &[0.0]));
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let mut grads = Gradients::zeros_like(&store);
    grads.get_mut(w)[0] = 2.5;
    let mut last = 0.0;
    for _ in 0..50 {
        adam.step(&mut store, &grads).unwrap();
        let now = store.get(w).data()[0];
        assert!(now < last);
        last = now;
    }
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("dense_0", "W", t(&[1], &[0.0]));
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let mut grads = Gradients::zeros_like(&store);
    grads.get_mut(w)[0] = f64::NAN;
    let err = adam.step(&mut store, &grads).unwrap_err().to_string();
    assert!(err.contains("dense_0.W"), "{err}");
    assert_eq!(store.get(w).data(), &[0.0]);
}

#[test]
fn global_norm_clipping() {
    let mut store = ParamStore::new();
    let a = store.add("l", "a", Tensor::zeros(&[2]));
    let mut grads = Gradients::zeros_like(&store);
    grads.get_mut(a).copy_from_slice(&[3.0, 4.0]);
    assert_eq!(grads.clip_global_norm(1.0), 5.0);
    assert!((grads.global_norm() - 1.0).abs() < 1e-12);
}

#[test]
fn backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (store, ids) = recurrent_store("gru", 3, 4, false, &mut rng);
    let xs = random(&mut rng, &[2, 3, 3], 1.0);
    let run = || {
        let mut g = Graph::new(&store);
        let x = g.input(xs.clone());
        let y = run_recurrent(&mut g, "gru", x, ids, None, false);
        let s = g.weighted_sum(y, vec![1.0; 8]).unwrap();
        g.backward(s).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn grad_check_flags_wrong_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let w = store.add("dense", "W", random(&mut rng, &[3, 2], 1.0));
    let b = store.add("dense", "b", random(&mut rng, &[2], 1.0));
    let xs = random(&mut rng, &[4, 3], 1.0);
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let x = g.input(xs.clone());
            let (wn, bn) = (g.param(w), g.param(b));
            let y = g.dense(x, wn, bn, false)?;
            let l = g.softmax_cross_entropy(y, &[0, 1, 1, 0])?;
            let mut grads = g.backward(l)?;
            grads.get_mut(w)[1] *= 1.5;
            Ok((g.value(l).item(), grads))
        },
        1e-6,
        1e-6,
        None,
    )
    .unwrap();
    assert!(!report.passed());
    assert!(report.per_layer()[0].1 > 1e-6);
}
