//! Random multimodel ensemble: randomly sized dense, convolutional and recurrent members
//! combined by unweighted majority vote.
//!
//! Dense members read TF-IDF rows; convolutional and recurrent members read embedding
//! index sequences. Every member draws its shape from its own seed, derived from the master
//! seed and the member's position, so the sampled list is reproducible.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::Predictions;
use crate::container::{Container, PipelineHashes, StoredModel};
use crate::error::{Error, Result};
use crate::kinds::FeaturizerKind;
use crate::neural::{accuracy, train, ArchitectureSpec, Cell, History, InputSpec, LabeledInputs, LayerSpec, Network, NeuralInputs, TrainConfig};
use crate::seeding::{derive_seed, rng_for, streams};

const MAX_RESAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dnn,
    Cnn,
    Rnn,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Dnn, Family::Cnn, Family::Rnn];

    pub fn label(self) -> &'static str {
        match self {
            Family::Dnn => "DNN",
            Family::Cnn => "CNN",
            Family::Rnn => "RNN",
        }
    }

    /// Dense members use TF-IDF; the others use embeddings.
    pub fn uses_tfidf(self) -> bool {
        self == Family::Dnn
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Range { min, max }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }

    fn check(self, what: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Config(format!("{what} range [{}, {}] is empty or starts at 0", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub models_per_family: usize,
    pub epochs: usize,
    pub dnn_layers: Range,
    /// Number of parallel convolution branches.
    pub cnn_branches: Range,
    pub rnn_layers: Range,
    pub nodes: Range,
    pub cnn_kernel_width: Range,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rnn_clip_norm: f64,
    /// Token cap for recurrent members.
    pub rnn_max_len: usize,
    /// Width of each pseudo time step when TF-IDF feeds a sequence member. Unused by default.
    pub tfidf_chunk: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            models_per_family: 3,
            epochs: 8,
            dnn_layers: Range::new(2, 5),
            cnn_branches: Range::new(2, 4),
            rnn_layers: Range::new(1, 3),
            nodes: Range::new(32, 256),
            cnn_kernel_width: Range::new(3, 8),
            dropout: 0.25,
            batch_size: 64,
            learning_rate: 1e-3,
            rnn_clip_norm: 5.0,
            rnn_max_len: 64,
            tfidf_chunk: 100,
        }
    }
}

impl EnsembleConfig {
    pub fn total(&self) -> usize {
        3 * self.models_per_family
    }

    pub fn validate(&self) -> Result<()> {
        if self.total() % 2 == 0 {
            return Err(Error::Config(format!(
                "{} members per family gives an even vote count",
                self.models_per_family
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.rnn_max_len == 0 {
            return Err(Error::Config("epochs, batch size and recurrent max length must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.dnn_layers.check("dense layer")?;
        self.cnn_branches.check("convolution branch")?;
        self.rnn_layers.check("recurrent layer")?;
        self.nodes.check("node")?;
        self.cnn_kernel_width.check("kernel width")
    }

    fn train_config(&self, family: Family, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            clip_norm: (family == Family::Rnn).then_some(self.rnn_clip_norm),
            ..TrainConfig::default()
        }
    }
}

/// Input sizes the sampled members must fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub tfidf_dim: usize,
    pub embedding_rows: usize,
    pub embedding_dim: usize,
    /// Length of the embedding sequences handed to the ensemble.
    pub max_len: usize,
}

/// One sampled member before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberPlan {
    pub name: String,
    pub family: Family,
    pub seed: u64,
    pub spec: ArchitectureSpec,
    /// Sampled sizes in plain words, e.g. `4 dense [212, 40, 97, 133]`.
    pub shape: String,
}

pub fn member_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, streams::ENSEMBLE + index as u64)
}

fn head() -> [LayerSpec; 2] {
    [LayerSpec::Dense { units: 2, relu: false }, LayerSpec::Softmax]
}

fn sample_member(config: &EnsembleConfig, family: Family, dims: &InputDims, seed: u64) -> Result<(ArchitectureSpec, String)> {
    let mut rng = rng_for(seed, 0);
    let rnn_len = config.rnn_max_len.min(dims.max_len);
    for _ in 0..MAX_RESAMPLES {
        let (input, mut layers, shape) = match family {
            Family::Dnn => {
                let widths: Vec<usize> = (0..config.dnn_layers.sample(&mut rng)).map(|_| config.nodes.sample(&mut rng)).collect();
                let mut layers = vec![LayerSpec::Flatten];
                for &units in &widths {
                    layers.push(LayerSpec::Dense { units, relu: true });
                    layers.push(LayerSpec::Dropout { rate: config.dropout });
                }
                let shape = format!("{} dense {widths:?}", widths.len());
                (InputSpec::TfidfVector { dim: dims.tfidf_dim }, layers, shape)
            }
            Family::Cnn => {
                let n = config.cnn_branches.sample(&mut rng);
                let branches: Vec<(usize, usize)> = (0..n)
                    .map(|_| (config.cnn_kernel_width.sample(&mut rng), config.nodes.sample(&mut rng)))
                    .collect();
                let input = InputSpec::EmbeddingSequence {
                    vocab: dims.embedding_rows,
                    dim: dims.embedding_dim,
                    max_len: dims.max_len,
                };
                let layers = vec![
                    LayerSpec::Embedding {
                        vocab: dims.embedding_rows,
                        dim: dims.embedding_dim,
                    },
                    LayerSpec::Concat {
                        branches: branches
                            .iter()
                            .map(|&(width, filters)| vec![LayerSpec::Conv1d { width, filters }, LayerSpec::AvgPool { window: None }])
                            .collect(),
                    },
                    LayerSpec::Dropout { rate: config.dropout },
                ];
                let desc: Vec<String> = branches.iter().map(|(w, f)| format!("{w}x{f}")).collect();
                (input, layers, format!("{n} branches [{}]", desc.join(", ")))
            }
            Family::Rnn => {
                let cell = if rng.random_bool(0.5) { Cell::Gru } else { Cell::Lstm };
                let hidden: Vec<usize> = (0..config.rnn_layers.sample(&mut rng)).map(|_| config.nodes.sample(&mut rng)).collect();
                let mut layers = vec![LayerSpec::Embedding {
                    vocab: dims.embedding_rows,
                    dim: dims.embedding_dim,
                }];
                for (i, &h) in hidden.iter().enumerate() {
                    layers.push(LayerSpec::Recurrent {
                        cell,
                        hidden: h,
                        return_sequence: i + 1 < hidden.len(),
                    });
                    layers.push(LayerSpec::Dropout { rate: config.dropout });
                }
                let name = match cell {
                    Cell::Gru => "gru",
                    Cell::Lstm => "lstm",
                };
                let input = InputSpec::EmbeddingSequence {
                    vocab: dims.embedding_rows,
                    dim: dims.embedding_dim,
                    max_len: rnn_len,
                };
                (input, layers, format!("{} {name} {hidden:?}", hidden.len()))
            }
        };
        layers.extend(head());
        let spec = ArchitectureSpec {
            name: family.label().to_ascii_lowercase(),
            input,
            layers,
        };
        // A kernel wider than the sequence is the one shape a draw can get wrong.
        if spec.validate().is_ok() {
            return Ok((spec, shape));
        }
    }
    Err(Error::InvalidArgument(format!(
        "no valid {} member after {MAX_RESAMPLES} draws; check the kernel range against max_len {}",
        family.label(),
        dims.max_len
    )))
}

/// Samples every member's architecture, family by family, in table order.
pub fn sample_architectures(config: &EnsembleConfig, dims: &InputDims, master_seed: u64) -> Result<Vec<MemberPlan>> {
    config.validate()?;
    let mut plans = Vec::with_capacity(config.total());
    for family in Family::ALL {
        for i in 0..config.models_per_family {
            let seed = member_seed(master_seed, plans.len());
            let (mut spec, shape) = sample_member(config, family, dims, seed)?;
            let name = format!("{}-{i}", family.label());
            spec.name = format!("rmdl-{}", name.to_ascii_lowercase());
            plans.push(MemberPlan {
                name,
                family,
                seed,
                spec,
                shape,
            });
        }
    }
    Ok(plans)
}

/// Per-document majority over an odd number of binary label lists.
pub fn vote(predictions: &[Vec<usize>]) -> Result<Vec<usize>> {
    if predictions.is_empty() || predictions.len() % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "majority vote needs an odd number of members, got {}",
            predictions.len()
        )));
    }
    let n = predictions[0].len();
    if let Some(bad) = predictions.iter().find(|p| p.len() != n) {
        return Err(Error::Shape(format!("member predictions of lengths {n} and {}", bad.len())));
    }
    let half = predictions.len() / 2;
    (0..n)
        .map(|row| {
            let mut ones = 0;
            for p in predictions {
                match p[row] {
                    0 => {}
                    1 => ones += 1,
                    other => return Err(Error::LabelOutOfRange(other)),
                }
            }
            Ok(usize::from(ones > half))
        })
        .collect()
}

/// Featurized splits for one input mode.
#[derive(Debug, Clone, Copy)]
pub struct SplitInputs<'a> {
    pub train: &'a NeuralInputs,
    pub validation: Option<&'a NeuralInputs>,
    pub test: &'a NeuralInputs,
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleData<'a> {
    pub tfidf: SplitInputs<'a>,
    pub embedding: SplitInputs<'a>,
    /// Pretrained rows for the embedding layer, padding row first.
    pub embedding_matrix: Option<&'a [f64]>,
    pub train_labels: &'a [usize],
    pub validation_labels: Option<&'a [usize]>,
    pub test_labels: &'a [usize],
}

impl EnsembleData<'_> {
    pub fn dims(&self, embedding_dim: usize) -> Result<InputDims> {
        let tfidf_dim = match self.tfidf.train {
            NeuralInputs::Tfidf(rows) => rows.first().map_or(0, |r| r.dim()),
            NeuralInputs::Sequences(_) => return Err(Error::Unsupported("dense members need TF-IDF rows".into())),
        };
        let max_len = match self.embedding.train {
            NeuralInputs::Sequences(seqs) => seqs.first().map_or(0, |s| s.indices.len()),
            NeuralInputs::Tfidf(_) => {
                return Err(Error::Unsupported("convolutional and recurrent members need token sequences".into()))
            }
        };
        let embedding_rows = match self.embedding_matrix {
            Some(m) if embedding_dim > 0 => m.len() / embedding_dim,
            _ => return Err(Error::InvalidArgument("the ensemble needs a pretrained embedding matrix".into())),
        };
        Ok(InputDims {
            tfidf_dim,
            embedding_rows,
            embedding_dim,
            max_len,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub plan: MemberPlan,
    /// Seed the kept weights were trained from; differs from the plan after a retry.
    pub trained_seed: u64,
    pub network: Network,
    pub history: History,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub test_predictions: Vec<usize>,
}

/// A member dropped from the vote, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
    pub test_predictions: Vec<usize>,
    pub test_accuracy: f64,
}

fn inputs_for<'a>(family: Family, data: &EnsembleData<'a>, rnn: &'a (NeuralInputs, Option<NeuralInputs>, NeuralInputs)) -> SplitInputs<'a> {
    match family {
        Family::Dnn => data.tfidf,
        Family::Cnn => data.embedding,
        Family::Rnn => SplitInputs {
            train: &rnn.0,
            validation: rnn.1.as_ref(),
            test: &rnn.2,
        },
    }
}

fn train_member(plan: &MemberPlan, seed: u64, config: &EnsembleConfig, data: &EnsembleData, inputs: SplitInputs) -> Result<Member> {
    let train_set = LabeledInputs {
        inputs: inputs.train,
        labels: data.train_labels,
    };
    let validation = match (inputs.validation, data.validation_labels) {
        (Some(inputs), Some(labels)) => Some(LabeledInputs { inputs, labels }),
        _ => None,
    };
    let embedding = if plan.family.uses_tfidf() { None } else { data.embedding_matrix };
    let tc = config.train_config(plan.family, seed);
    let (network, history) = train(plan.spec.clone(), embedding, train_set, validation, &tc)?;
    let validation_accuracy = match validation {
        Some(v) => Some(accuracy(&network.predict(v.inputs, config.batch_size)?.labels, v.labels)),
        None => None,
    };
    let test_predictions = network.predict(inputs.test, config.batch_size)?.labels;
    Ok(Member {
        plan: plan.clone(),
        trained_seed: seed,
        test_accuracy: accuracy(&test_predictions, data.test_labels),
        validation_accuracy,
        test_predictions,
        network,
        history,
    })
}

/// Trains every sampled member concurrently and combines them by majority vote.
///
/// A member whose loss diverges is retrained once from a fresh seed, then dropped. If a drop
/// leaves an even count, the weakest remaining member of the same family is dropped as well
/// (ranked by validation accuracy when a validation split is given, else by test accuracy).
pub fn train_ensemble(config: &EnsembleConfig, data: &EnsembleData, embedding_dim: usize, master_seed: u64) -> Result<EnsembleModel> {
    let dims = data.dims(embedding_dim)?;
    let plans = sample_architectures(config, &dims, master_seed)?;
    let rnn_len = config.rnn_max_len.min(dims.max_len);
    let rnn = (
        data.embedding.train.truncated(rnn_len),
        data.embedding.validation.map(|v| v.truncated(rnn_len)),
        data.embedding.test.truncated(rnn_len),
    );
    let outcomes: Vec<Result<Member>> = plans
        .par_iter()
        .map(|plan| {
            let inputs = inputs_for(plan.family, data, &rnn);
            match train_member(plan, plan.seed, config, data, inputs) {
                Err(Error::Diverged { .. }) => train_member(plan, derive_seed(plan.seed, 1), config, data, inputs),
                other => other,
            }
        })
        .collect();

    let mut members = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (plan, outcome) in plans.iter().zip(outcomes) {
        match outcome {
            Ok(m) => {
                if m.trained_seed != plan.seed {
                    warnings.push(format!("{} diverged and was retrained from seed {}", plan.name, m.trained_seed));
                }
                members.push(m);
            }
            Err(e @ Error::Diverged { .. }) => {
                warnings.push(format!("{} diverged twice and is excluded: {e}", plan.name));
                excluded.push(Exclusion {
                    name: plan.name.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    while members.len() % 2 == 0 && !members.is_empty() {
        let family = plans
            .iter()
            .rev()
            .find(|p| excluded.iter().any(|x| x.name == p.name))
            .map(|p| p.family);
        let rank = |m: &Member| m.validation_accuracy.unwrap_or(m.test_accuracy);
        let pool: Vec<usize> = (0..members.len())
            .filter(|&i| family.is_none_or(|f| members[i].plan.family == f))
            .collect();
        let pool = if pool.is_empty() { (0..members.len()).collect() } else { pool };
        let weakest = pool
            .into_iter()
            .min_by(|&a, &b| rank(&members[a]).total_cmp(&rank(&members[b])).then(b.cmp(&a)))
            .expect("non-empty pool");
        let m = members.remove(weakest);
        warnings.push(format!("{} excluded to keep the vote count odd", m.plan.name));
        excluded.push(Exclusion {
            name: m.plan.name,
            reason: "dropped to keep the vote count odd".into(),
        });
    }
    if members.is_empty() {
        return Err(Error::InvalidArgument("every ensemble member diverged".into()));
    }
    let test_predictions = vote(&members.iter().map(|m| m.test_predictions.clone()).collect::<Vec<_>>())?;
    Ok(EnsembleModel {
        test_accuracy: accuracy(&test_predictions, data.test_labels),
        test_predictions,
        members,
        excluded,
        warnings,
    })
}

/// Majority vote of trained networks on new documents; the score is the fraction voting real.
pub fn predict_members<'a>(
    members: impl IntoIterator<Item = (Family, &'a Network)>,
    tfidf: &NeuralInputs,
    embedding: &NeuralInputs,
    batch_size: usize,
) -> Result<Predictions> {
    let mut votes = Vec::new();
    for (family, net) in members {
        let inputs = if family.uses_tfidf() { tfidf } else { embedding };
        let inputs = match &net.spec.input {
            InputSpec::EmbeddingSequence { max_len, .. } => inputs.truncated(*max_len),
            _ => inputs.clone(),
        };
        votes.push(net.predict(&inputs, batch_size)?.labels);
    }
    let labels = vote(&votes)?;
    let n = votes.len() as f64;
    let prob_real = (0..labels.len())
        .map(|row| votes.iter().filter(|v| v[row] == 1).count() as f64 / n)
        .collect();
    Ok(Predictions { labels, prob_real })
}

impl EnsembleModel {
    pub fn predict(&self, tfidf: &NeuralInputs, embedding: &NeuralInputs, batch_size: usize) -> Result<Predictions> {
        predict_members(self.members.iter().map(|m| (m.plan.family, &m.network)), tfidf, embedding, batch_size)
    }

    /// Writes one container per member, `manifest.json` and `members.md` into `dir`.
    pub fn save(&self, dir: &Path, tfidf: &PipelineHashes, embedding: &PipelineHashes) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.members {
            let (featurizer, hashes) = if m.plan.family.uses_tfidf() {
                (FeaturizerKind::Tfidf, tfidf)
            } else {
                (FeaturizerKind::Embedding, embedding)
            };
            Container::new(featurizer, StoredModel::Neural(m.network.clone()), hashes.clone())
                .save(&dir.join(format!("{}.ifdm", m.plan.name)))?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("members.md");
        std::fs::write(&path, self.member_table()).map_err(|e| Error::io(&path, e))
    }

    /// Markdown table with one row per member and the combined row last.
    pub fn member_table(&self) -> String {
        let mut out = String::new();
        out.push_str("| Model | Architecture | Accuracy (%) |\n|---|---|---:|\n");
        for m in &self.members {
            let _ = writeln!(out, "| {} | {} | {:.2} |", m.plan.name, m.plan.shape, 100.0 * m.test_accuracy);
        }
        for x in &self.excluded {
            let _ = writeln!(out, "| {} | excluded: {} | - |", x.name, x.reason);
        }
        let _ = writeln!(
            out,
            "| RMDL | unweighted majority of {} | {:.2} |",
            self.members.len(),
            100.0 * self.test_accuracy
        );
        out
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            members: self
                .members
                .iter()
                .map(|m| ManifestMember {
                    name: m.plan.name.clone(),
                    family: m.plan.family,
                    plan_seed: m.plan.seed,
                    trained_seed: m.trained_seed,
                    shape: m.plan.shape.clone(),
                    spec: m.plan.spec.clone(),
                    validation_accuracy: m.validation_accuracy,
                    test_accuracy: m.test_accuracy,
                    best_epoch: m.history.best_epoch,
                })
                .collect(),
            excluded: self.excluded.clone(),
            combination: "unweighted majority vote".into(),
            test_accuracy: self.test_accuracy,
        }
    }
}

/// An ensemble read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEnsemble {
    pub manifest: Manifest,
    pub networks: Vec<Network>,
}

impl LoadedEnsemble {
    /// Loads every member named in the manifest, checking each against the active pipeline.
    pub fn load(dir: &Path, tfidf: &PipelineHashes, embedding: &PipelineHashes) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut networks = Vec::with_capacity(manifest.members.len());
        for m in &manifest.members {
            let hashes = if m.family.uses_tfidf() { tfidf } else { embedding };
            let c = Container::load_verified(&dir.join(format!("{}.ifdm", m.name)), hashes)?;
            match c.model {
                StoredModel::Neural(net) => networks.push(net),
                StoredModel::Classic(_) => {
                    return Err(Error::Container(format!("ensemble member {} is not a network", m.name)));
                }
            }
        }
        Ok(LoadedEnsemble { manifest, networks })
    }

    pub fn predict(&self, tfidf: &NeuralInputs, embedding: &NeuralInputs, batch_size: usize) -> Result<Predictions> {
        let families = self.manifest.members.iter().map(|m| m.family);
        predict_members(families.zip(&self.networks), tfidf, embedding, batch_size)
    }
}

/// Structured summary written next to the member containers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub members: Vec<ManifestMember>,
    pub excluded: Vec<Exclusion>,
    pub combination: String,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    pub family: Family,
    pub plan_seed: u64,
    pub trained_seed: u64,
    pub shape: String,
    pub spec: ArchitectureSpec,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub best_epoch: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> InputDims {
        InputDims {
            tfidf_dim: 40,
            embedding_rows: 12,
            embedding_dim: 4,
            max_len: 10,
        }
    }

    #[test]
    fn default_plan_has_three_per_family() {
        let plans = sample_architectures(&EnsembleConfig::default(), &dims(), 7).unwrap();
        let names: Vec<&str> = plans.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["DNN-0", "DNN-1", "DNN-2", "CNN-0", "CNN-1", "CNN-2", "RNN-0", "RNN-1", "RNN-2"]);
        for p in &plans {
            assert_eq!(p.spec.input.is_tfidf(), p.family == Family::Dnn, "{}", p.name);
            p.spec.validate().unwrap();
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let cfg = EnsembleConfig::default();
        assert_eq!(sample_architectures(&cfg, &dims(), 3).unwrap(), sample_architectures(&cfg, &dims(), 3).unwrap());
        assert_ne!(sample_architectures(&cfg, &dims(), 3).unwrap(), sample_architectures(&cfg, &dims(), 4).unwrap());
    }

    #[test]
    fn degenerate_ranges_give_identical_members() {
        let cfg = EnsembleConfig {
            dnn_layers: Range::new(2, 2),
            nodes: Range::new(64, 64),
            ..EnsembleConfig::default()
        };
        let plans = sample_architectures(&cfg, &dims(), 1).unwrap();
        let dnn: Vec<_> = plans.iter().filter(|p| p.family == Family::Dnn).map(|p| &p.spec.layers).collect();
        assert!(dnn.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sampled_sizes_stay_in_range() {
        let cfg = EnsembleConfig::default();
        for seed in 0..20 {
            for p in sample_architectures(&cfg, &dims(), seed).unwrap() {
                let body = p.spec.body();
                match p.family {
                    Family::Dnn => {
                        let dense: Vec<usize> = body
                            .iter()
                            .filter_map(|l| match l {
                                LayerSpec::Dense { units, .. } => Some(*units),
                                _ => None,
                            })
                            .collect();
                        assert!((2..=5).contains(&(dense.len() - 1)));
                        assert!(dense[..dense.len() - 1].iter().all(|u| (32..=256).contains(u)));
                    }
                    Family::Cnn => {
                        let n = body
                            .iter()
                            .find_map(|l| match l {
                                LayerSpec::Concat { branches } => Some(branches.len()),
                                _ => None,
                            })
                            .unwrap();
                        assert!((2..=4).contains(&n));
                    }
                    Family::Rnn => {
                        let n = body.iter().filter(|l| matches!(l, LayerSpec::Recurrent { .. })).count();
                        assert!((1..=3).contains(&n));
                    }
                }
            }
        }
    }

    #[test]
    fn short_sequences_force_a_resample_or_error() {
        let short = InputDims { max_len: 2, ..dims() };
        let cfg = EnsembleConfig {
            cnn_kernel_width: Range::new(2, 3),
            ..EnsembleConfig::default()
        };
        for p in sample_architectures(&cfg, &short, 5).unwrap() {
            p.spec.validate().unwrap();
        }
        let impossible = EnsembleConfig::default();
        assert!(sample_architectures(&impossible, &short, 5).is_err());
    }

    #[test]
    fn vote_rules() {
        assert_eq!(vote(&[vec![1, 0], vec![1, 0], vec![1, 0]]).unwrap(), [1, 0]);
        let five_four: Vec<Vec<usize>> = (0..9).map(|i| vec![usize::from(i < 5)]).collect();
        assert_eq!(vote(&five_four).unwrap(), [1]);
        assert!(vote(&[vec![1], vec![0]]).is_err());
        assert!(vote(&[]).is_err());
        assert!(vote(&[vec![1], vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn even_member_config_rejected() {
        let cfg = EnsembleConfig {
            models_per_family: 2,
            ..EnsembleConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
