//! Toy-sized builds of every deep architecture, for gradient and learning checks.

use infodemic::features::{IndexSequence, SparseVector};
use infodemic::kinds::{FeaturizerKind, ModelKind};
use infodemic::neural::{loss_and_gradients, ArchitectureSpec, Network, NeuralConfig, NeuralInputs};
use infodemic::tensor::{grad_check, GradCheckReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TFIDF_DIM: usize = 24;
pub const VOCAB: usize = 9;
pub const EMBED_DIM: usize = 3;
pub const MAX_LEN: usize = 5;

pub fn toy_config() -> NeuralConfig {
    NeuralConfig {
        dnn_widths: vec![6, 5, 4, 3],
        cnn_kernel_widths: vec![1, 2, 3, 4, 5, 2],
        cnn_filters: 3,
        rnn_hidden: 4,
        rnn_layers: 4,
        rnn_max_len: MAX_LEN,
        tfidf_chunk: 4,
        ..NeuralConfig::default()
    }
}

pub fn random_inputs(featurizer: FeaturizerKind, n: usize, rng: &mut ChaCha8Rng) -> NeuralInputs {
    match featurizer {
        FeaturizerKind::Tfidf => NeuralInputs::Tfidf(
            (0..n)
                .map(|_| {
                    let pairs = (0..4)
                        .map(|_| (rng.random_range(0..TFIDF_DIM as u32), rng.random_range(0.05..1.0)))
                        .collect();
                    SparseVector::from_pairs(TFIDF_DIM, pairs).unwrap()
                })
                .collect(),
        ),
        FeaturizerKind::Embedding => NeuralInputs::Sequences(
            (0..n)
                .map(|_| {
                    let len = rng.random_range(1..=MAX_LEN);
                    let mut indices: Vec<u32> = (0..len).map(|_| rng.random_range(1..VOCAB as u32)).collect();
                    indices.resize(MAX_LEN, 0);
                    IndexSequence {
                        indices,
                        true_length: len,
                    }
                })
                .collect(),
        ),
    }
}

pub fn toy_spec(kind: ModelKind, featurizer: FeaturizerKind) -> ArchitectureSpec {
    spec_with(&toy_config(), kind, featurizer)
}

/// Somewhat wider than the toy sizes, for learning checks.
pub fn small_config() -> NeuralConfig {
    NeuralConfig {
        dnn_widths: vec![512, 256, 128, 64],
        cnn_filters: 32,
        rnn_hidden: 32,
        ..toy_config()
    }
}

pub fn spec_with(cfg: &NeuralConfig, kind: ModelKind, featurizer: FeaturizerKind) -> ArchitectureSpec {
    let input = cfg.input_for(kind, featurizer, TFIDF_DIM, VOCAB, EMBED_DIM, MAX_LEN);
    cfg.build(kind, input).unwrap()
}

/// Central-difference check of a whole built architecture with dropout in eval mode.
pub fn architecture_grad_check(kind: ModelKind, featurizer: FeaturizerKind, seed: u64) -> GradCheckReport {
    architecture_grad_check_eps(kind, featurizer, seed, 1e-5)
}

pub fn architecture_grad_check_eps(kind: ModelKind, featurizer: FeaturizerKind, seed: u64, eps: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = toy_spec(kind, featurizer);
    let mut net = Network::init(spec.clone(), seed, None).unwrap();
    // Zero biases can leave a ReLU exactly at its kink, where only one-sided derivatives exist.
    let ids: Vec<_> = net.store.ids().collect();
    for id in ids {
        if net.store.param(id).name == "b" {
            net.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    let inputs = random_inputs(featurizer, 3, &mut rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..2)).collect();
    let batch = inputs.batch(&[0, 1, 2]);
    grad_check(
        &mut net.store,
        |store| {
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(0);
            let (loss, grads, _) = loss_and_gradients(&spec, store, &batch, &labels, false, &mut dropout_rng)?;
            Ok((loss, grads))
        },
        eps,
        if matches!(kind, ModelKind::Gru | ModelKind::Lstm) { 1e-5 } else { 1e-6 },
        Some(40),
    )
    .unwrap()
}

pub const DEEP_KINDS: [ModelKind; 4] = [ModelKind::Dnn, ModelKind::Cnn, ModelKind::Gru, ModelKind::Lstm];
