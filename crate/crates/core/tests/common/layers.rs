//! Central-difference checks for every layer kind, plus the loss identity.

use infodemic::features::SparseVector;
use infodemic::tensor::{grad_check, Gradients, Graph, ParamId, ParamStore, Pool, Tensor};
use infodemic::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn probe(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn finish(g: &Graph, loss: infodemic::tensor::NodeId) -> Result<(f64, Gradients)> {
    Ok((g.value(loss).item(), g.backward(loss)?))
}

pub fn check_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, inp, out) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
    let mut store = ParamStore::new();
    let w = store.add("dense", "W", random(&mut rng, &[inp, out], 1.0));
    let b = store.add("dense", "b", random(&mut rng, &[out], 1.0));
    let x = random(&mut rng, &[batch, inp], 1.0);
    let weights = probe(&mut rng, batch * out);
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let xn = g.input(x.clone());
            let (wn, bn) = (g.param(w), g.param(b));
            let y = g.dense(xn, wn, bn, true)?;
            let l = g.weighted_sum(y, weights.clone())?;
            finish(&g, l)
        },
        EPS,
        1e-6,
        None,
    )
    .unwrap();
    report.max_rel_error()
}

pub fn check_sparse_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inp, out) = (8, 3);
    let mut store = ParamStore::new();
    let w = store.add("sparse", "W", random(&mut rng, &[inp, out], 1.0));
    let b = store.add("sparse", "b", random(&mut rng, &[out], 1.0));
    let rows: Vec<SparseVector> = (0..3)
        .map(|_| {
            let pairs = (0..3).map(|_| (rng.random_range(0..inp as u32), rng.random_range(0.1..1.0))).collect();
            SparseVector::from_pairs(inp, pairs).unwrap()
        })
        .collect();
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let (wn, bn) = (g.param(w), g.param(b));
            let y = g.sparse_dense(rows.clone(), wn, bn, false)?;
            let l = g.softmax_cross_entropy(y, &[0, 2, 1])?;
            finish(&g, l)
        },
        EPS,
        1e-6,
        None,
    )
    .unwrap();
    report.max_rel_error()
}

pub fn check_conv_pool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, time, ch, width, filters) = (
        rng.random_range(1..3),
        rng.random_range(4..8),
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
    );
    let mut store = ParamStore::new();
    let k = store.add("conv", "K", random(&mut rng, &[width, ch, filters], 1.0));
    let b = store.add("conv", "b", random(&mut rng, &[filters], 0.5));
    let table = store.add("embed", "E", random(&mut rng, &[6, ch], 1.0));
    let indices: Vec<u32> = (0..batch * time).map(|_| rng.random_range(0..6)).collect();
    let steps = time - width + 1;
    let weights = probe(&mut rng, batch * (steps / 2) * filters);
    let global_weights = probe(&mut rng, batch * filters);
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let tn = g.param(table);
            let e = g.embedding(indices.clone(), batch, tn, None)?;
            let (kn, bn) = (g.param(k), g.param(b));
            let c = g.conv1d(e, kn, bn)?;
            let fixed = g.avg_pool(c, Pool::Fixed(2))?;
            let flat = g.flatten(fixed)?;
            let global = g.avg_pool(c, Pool::Global)?;
            let l1 = g.weighted_sum(flat, weights.clone())?;
            let l2 = g.weighted_sum(global, global_weights.clone())?;
            let (v1, g1) = finish(&g, l1)?;
            let (v2, g2) = finish(&g, l2)?;
            let mut total = g1;
            for id in s.ids() {
                total.get_mut(id).iter_mut().zip(g2.get(id)).for_each(|(a, b)| *a += b);
            }
            Ok((v1 + v2, total))
        },
        EPS,
        1e-6,
        None,
    )
    .unwrap();
    report.max_rel_error()
}

pub fn check_concat_dropout(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let w1 = store.add("a", "W", random(&mut rng, &[3, 2], 1.0));
    let b1 = store.add("a", "b", random(&mut rng, &[2], 1.0));
    let w2 = store.add("b", "W", random(&mut rng, &[3, 4], 1.0));
    let b2 = store.add("b", "b", random(&mut rng, &[4], 1.0));
    let x = random(&mut rng, &[2, 3], 1.0);
    let weights = probe(&mut rng, 12);
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let xn = g.input(x.clone());
            let (a, ab, c, cb) = (g.param(w1), g.param(b1), g.param(w2), g.param(b2));
            let ya = g.dense(xn, a, ab, false)?;
            let yc = g.dense(xn, c, cb, false)?;
            let cat = g.concat(vec![ya, yc])?;
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            let d = g.dropout(cat, 0.3, true, &mut mask_rng)?;
            let l = g.weighted_sum(d, weights.clone())?;
            finish(&g, l)
        },
        EPS,
        1e-6,
        None,
    )
    .unwrap();
    report.max_rel_error()
}

pub fn check_recurrent(seed: u64, lstm: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = if lstm { 4 } else { 3 };
    let (batch, time, inp, hidden) = (rng.random_range(1..4), 3, rng.random_range(1..4), rng.random_range(1..5));
    let mut store = ParamStore::new();
    let wx = store.add("rnn", "Wx", random(&mut rng, &[inp, gates * hidden], 0.8));
    let wh = store.add("rnn", "Wh", random(&mut rng, &[hidden, gates * hidden], 0.8));
    let b = store.add("rnn", "b", random(&mut rng, &[gates * hidden], 0.5));
    let wx2 = store.add("rnn2", "Wx", random(&mut rng, &[hidden, gates * hidden], 0.8));
    let wh2 = store.add("rnn2", "Wh", random(&mut rng, &[hidden, gates * hidden], 0.8));
    let b2 = store.add("rnn2", "b", random(&mut rng, &[gates * hidden], 0.5));
    let x = random(&mut rng, &[batch, time, inp], 1.0);
    let lengths: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=time)).collect();
    let weights = probe(&mut rng, batch * hidden);
    let layer = |g: &mut Graph, x, ids: [ParamId; 3], lengths: Option<Vec<usize>>, seq: bool| {
        let (a, c, d) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]));
        if lstm {
            g.lstm(x, a, c, d, lengths, seq)
        } else {
            g.gru(x, a, c, d, lengths, seq)
        }
    };
    let report = grad_check(
        &mut store,
        |s| {
            let mut g = Graph::new(s);
            let xn = g.input(x.clone());
            let h1 = layer(&mut g, xn, [wx, wh, b], Some(lengths.clone()), true)?;
            let h2 = layer(&mut g, h1, [wx2, wh2, b2], Some(lengths.clone()), false)?;
            let l = g.weighted_sum(h2, weights.clone())?;
            finish(&g, l)
        },
        EPS,
        1e-5,
        None,
    )
    .unwrap();
    report.max_rel_error()
}


/// Layer checks as (name, worst relative error over `seeds`, tolerance).
pub fn layer_errors(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64, f64)> {
    let worst = |f: &dyn Fn(u64) -> f64| seeds.clone().map(f).fold(0.0f64, f64::max);
    vec![
        ("dense", worst(&check_dense), 1e-6),
        ("sparse dense", worst(&check_sparse_dense), 1e-6),
        ("embedding, conv1d, pooling, flatten", worst(&check_conv_pool), 1e-6),
        ("concat, dropout", worst(&check_concat_dropout), 1e-6),
        ("gru", worst(&|s| check_recurrent(s, false)), 1e-5),
        ("lstm", worst(&|s| check_recurrent(s, true)), 1e-5),
    ]
}

pub struct LossIdentity {
    /// |loss(uniform logits) - ln 2|
    pub uniform_error: f64,
    /// Largest gap between the analytic gradient and softmax minus one-hot.
    pub analytic_error: f64,
    /// Largest gap between the analytic gradient and central differences.
    pub numeric_error: f64,
}

pub fn loss_identity(seed: u64) -> LossIdentity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let uniform = store.add("head", "uniform", Tensor::new(vec![3, 2], vec![0.7, 0.7, -1.2, -1.2, 0.0, 0.0]).unwrap());
    let logits = store.add("head", "logits", random(&mut rng, &[4, 2], 3.0));
    let labels = [0usize, 1, 1, 0];

    let mut g = Graph::new(&store);
    let un = g.param(uniform);
    let l = g.softmax_cross_entropy(un, &[0, 1, 1]).unwrap();
    let uniform_error = (g.value(l).item() - std::f64::consts::LN_2).abs();

    let mut g = Graph::new(&store);
    let ln = g.param(logits);
    let l = g.softmax_cross_entropy(ln, &labels).unwrap();
    let grads = g.backward(l).unwrap();
    let probs = infodemic::tensor::softmax_rows(store.get(logits).data(), 2);
    let mut analytic_error = 0.0f64;
    for (i, &label) in labels.iter().enumerate() {
        for c in 0..2 {
            let expected = (probs[i * 2 + c] - if c == label { 1.0 } else { 0.0 }) / labels.len() as f64;
            analytic_error = analytic_error.max((grads.get(logits)[i * 2 + c] - expected).abs());
        }
    }

    let analytic = grads.get(logits).to_vec();
    let h = 1e-5;
    let mut numeric_error = 0.0f64;
    for j in 0..analytic.len() {
        let eval = |delta: f64| {
            let mut s = store.clone();
            s.get_mut(logits).data_mut()[j] += delta;
            let mut g = Graph::new(&s);
            let ln = g.param(logits);
            let l = g.softmax_cross_entropy(ln, &labels).unwrap();
            g.value(l).item()
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        numeric_error = numeric_error.max((numeric - analytic[j]).abs());
    }
    LossIdentity {
        uniform_error,
        analytic_error,
        numeric_error,
    }
}
