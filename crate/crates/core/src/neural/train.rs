//! Mini-batch Adam training with best-validation weight retention.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{loss_and_gradients, Network, NeuralInputs};
use super::spec::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for, streams};
use crate::tensor::{AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F64,
    /// Parameters are rounded to `f32` after every update.
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Global gradient-norm cap, used for recurrent models.
    pub clip_norm: Option<f64>,
    /// A batch loss above this (or non-finite) aborts the run.
    pub abort_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            precision: Precision::F64,
            clip_norm: None,
            abort_loss: 1e4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl History {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,train_acc,val_acc")?;
        for e in &self.epochs {
            let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(w, "{},{:.6},{:.6},{}", e.epoch, e.train_loss, e.train_acc, val)?;
        }
        Ok(())
    }
}

/// Labelled inputs for one split.
#[derive(Debug, Clone, Copy)]
pub struct LabeledInputs<'a> {
    pub inputs: &'a NeuralInputs,
    pub labels: &'a [usize],
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// Trains `spec` from a fresh seeded initialization. The returned network carries the weights
/// of the epoch with the best validation accuracy (earliest on ties), or of the last epoch when
/// no validation split is given.
pub fn train(
    spec: ArchitectureSpec,
    embedding: Option<&[f64]>,
    train_set: LabeledInputs,
    validation: Option<LabeledInputs>,
    config: &TrainConfig,
) -> Result<(Network, History)> {
    config.validate()?;
    let n = train_set.labels.len();
    if n == 0 || train_set.inputs.len() != n {
        return Err(Error::Shape(format!(
            "{} training inputs for {n} labels",
            train_set.inputs.len()
        )));
    }
    if let Some(&bad) = train_set.labels.iter().find(|&&l| l > 1) {
        return Err(Error::LabelOutOfRange(bad));
    }
    train_set.inputs.check(&spec.input)?;
    if let Some(v) = &validation {
        v.inputs.check(&spec.input)?;
    }
    let mut net = Network::init(spec, config.seed, embedding)?;
    if config.precision == Precision::F32 {
        net.store.round_to_f32();
    }
    let mut adam = AdamState::new(
        &net.store,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle_rng = rng_for(derive_seed(config.seed, streams::NEURAL_SHUFFLE), 0);
    let mut dropout_rng = rng_for(derive_seed(config.seed, streams::NEURAL_DROPOUT), 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();
    let mut best: Option<(f64, crate::tensor::ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.inputs.batch(rows);
            let labels: Vec<usize> = rows.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, mut grads, probs) =
                loss_and_gradients(&net.spec, &net.store, &batch, &labels, true, &mut dropout_rng)?;
            if !loss.is_finite() || loss > config.abort_loss {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            loss_sum += loss * rows.len() as f64;
            correct += probs
                .chunks_exact(2)
                .zip(&labels)
                .filter(|(p, &l)| usize::from(p[1] > p[0]) == l)
                .count();
            grads.check_finite(&net.store)?;
            if let Some(max) = config.clip_norm {
                grads.clip_global_norm(max);
            }
            adam.step(&mut net.store, &grads)?;
            if config.precision == Precision::F32 {
                net.store.round_to_f32();
            }
        }
        let val_acc = match &validation {
            Some(v) => {
                let p = net.predict(v.inputs, config.batch_size)?;
                Some(accuracy(&p.labels, v.labels))
            }
            None => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_acc,
        });
        let score = val_acc.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, net.store.clone()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, store)) = best {
        net.store = store;
    }
    Ok((net, history))
}
