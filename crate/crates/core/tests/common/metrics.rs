//! Direct-loop metric oracle.

use infodemic::evaluation::{confusion, metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Largest gap between the confusion-matrix metrics and per-element loops on random labels.
pub fn metric_oracle_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..300);
    let p_true = rng.random_range(0.0..1.0);
    let p_agree = rng.random_range(0.0..1.0);
    let y: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(p_true))).collect();
    let p: Vec<usize> = y.iter().map(|&t| if rng.random_bool(p_agree) { t } else { 1 - t }).collect();

    let mut correct = 0;
    let (mut predicted_real, mut actual_real, mut hits) = (0, 0, 0);
    for i in 0..n {
        if y[i] == p[i] {
            correct += 1;
        }
        if p[i] == 1 {
            predicted_real += 1;
        }
        if y[i] == 1 {
            actual_real += 1;
            if p[i] == 1 {
                hits += 1;
            }
        }
    }
    let accuracy = correct as f64 / n as f64;
    let precision = ratio(hits, predicted_real);
    let recall = ratio(hits, actual_real);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    let m = metrics(&confusion(&y, &p).unwrap()).unwrap();
    [
        (m.accuracy, accuracy),
        (m.precision, precision),
        (m.recall, recall),
        (m.f1, f1),
    ]
    .iter()
    .map(|(a, b)| (a - b).abs())
    .fold(0.0, f64::max)
}
