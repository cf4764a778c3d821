//! The four deep architectures (DNN, CNN, GRU and LSTM networks) built on the tensor engine.

mod network;
mod spec;
mod train;

use serde::{Deserialize, Serialize};

pub use network::{logits, loss_and_gradients, Batch, Network, NeuralInputs};
pub use spec::{build_cnn, build_dnn, build_rnn, ArchitectureSpec, Cell, InputSpec, LayerSpec, Shape};
pub use train::{accuracy, train, EpochRecord, History, LabeledInputs, Precision, TrainConfig};

use crate::error::{Error, Result};
use crate::kinds::{FeaturizerKind, ModelKind};

/// Architecture sizes. Defaults are the reduced desk-scale profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralConfig {
    pub dnn_widths: Vec<usize>,
    pub cnn_kernel_widths: Vec<usize>,
    pub cnn_filters: usize,
    pub rnn_hidden: usize,
    pub rnn_layers: usize,
    /// Token cap for recurrent models on embedding input.
    pub rnn_max_len: usize,
    pub dropout: f64,
    /// Width of each pseudo time step when a TF-IDF row feeds a sequence model.
    pub tfidf_chunk: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rnn_clip_norm: f64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            dnn_widths: vec![512, 256, 128, 64],
            cnn_kernel_widths: vec![3, 4, 5, 6, 7, 8],
            cnn_filters: 64,
            rnn_hidden: 64,
            rnn_layers: 4,
            rnn_max_len: 64,
            dropout: 0.25,
            tfidf_chunk: 100,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            rnn_clip_norm: 5.0,
        }
    }
}

impl NeuralConfig {
    /// Lifts the recurrent caps to the full sequence length and a wider hidden state.
    pub fn paper_scale(mut self, max_len: usize) -> Self {
        self.rnn_max_len = max_len;
        self.rnn_hidden = self.rnn_hidden.max(128);
        self
    }

    /// Sequence length the featurizer must produce for `kind` on embedding input.
    pub fn sequence_len(&self, kind: ModelKind, feature_max_len: usize) -> usize {
        match kind {
            ModelKind::Gru | ModelKind::Lstm => self.rnn_max_len.min(feature_max_len),
            _ => feature_max_len,
        }
    }

    pub fn input_for(
        &self,
        kind: ModelKind,
        featurizer: FeaturizerKind,
        tfidf_dim: usize,
        embedding_rows: usize,
        embedding_dim: usize,
        max_len: usize,
    ) -> InputSpec {
        match (featurizer, kind) {
            (FeaturizerKind::Tfidf, ModelKind::Dnn) => InputSpec::TfidfVector { dim: tfidf_dim },
            (FeaturizerKind::Tfidf, _) => InputSpec::TfidfSequence {
                dim: tfidf_dim,
                chunk: self.tfidf_chunk,
            },
            (FeaturizerKind::Embedding, _) => InputSpec::EmbeddingSequence {
                vocab: embedding_rows,
                dim: embedding_dim,
                max_len,
            },
        }
    }

    pub fn build(&self, kind: ModelKind, input: InputSpec) -> Result<ArchitectureSpec> {
        match kind {
            ModelKind::Dnn => build_dnn(input, &self.dnn_widths, self.dropout),
            ModelKind::Cnn => build_cnn(input, &self.cnn_kernel_widths, self.cnn_filters, self.dropout),
            ModelKind::Gru => build_rnn(Cell::Gru, input, self.rnn_hidden, self.rnn_layers, self.dropout),
            ModelKind::Lstm => build_rnn(Cell::Lstm, input, self.rnn_hidden, self.rnn_layers, self.dropout),
            other => Err(Error::InvalidArgument(format!("{other} is not a single deep architecture"))),
        }
    }

    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            clip_norm: matches!(kind, ModelKind::Gru | ModelKind::Lstm).then_some(self.rnn_clip_norm),
            ..TrainConfig::default()
        }
    }
}
