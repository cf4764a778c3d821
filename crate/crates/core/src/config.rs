//! Run configuration: one flat TOML table of typed keys.
//!
//! Every key is optional and falls back to the default listed in [`RunConfig::default`].
//! Unknown keys are rejected. Command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classic::ClassicConfig;
use crate::corpus::{TableFormat, TableOptions};
use crate::error::{Error, Result};
use crate::neural::{NeuralConfig, Precision};
use crate::preprocess::PreprocessConfig;
use crate::rmdl::{EnsembleConfig, Range};
use crate::synthetic::SyntheticConfig;

pub const GLOVE_URL: &str = "https://nlp.stanford.edu/data/glove.twitter.27B.zip";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // data
    pub train_path: PathBuf,
    pub validation_path: PathBuf,
    pub test_path: PathBuf,
    pub format: TableFormat,
    pub id_column: String,
    pub text_column: String,
    pub label_column: String,
    /// Generate this many synthetic documents instead of reading the split files.
    pub synthetic: Option<usize>,

    // embeddings
    pub embeddings_path: PathBuf,
    pub embedding_dim: usize,
    pub embeddings_url: String,
    /// Member of the downloaded archive holding the vectors.
    pub embeddings_member: String,
    /// Expected SHA-256 of the downloaded archive; empty skips the check.
    pub embeddings_sha256: String,

    // preprocessing and features
    pub drop_numeric: bool,
    pub stem: bool,
    pub stoplist_path: Option<PathBuf>,
    pub min_df: usize,
    pub l2_normalize: bool,
    pub max_len: usize,

    // conventional models
    pub nb_alpha: f64,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub rf_min_samples_leaf: usize,
    pub gb_estimators: usize,
    pub gb_learning_rate: f64,
    pub gb_max_depth: usize,

    // neural models
    pub dnn_widths: Vec<usize>,
    pub cnn_kernel_widths: Vec<usize>,
    pub cnn_filters: usize,
    pub rnn_hidden: usize,
    pub rnn_layers: usize,
    pub rnn_max_len: usize,
    pub dropout: f64,
    pub tfidf_chunk: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rnn_clip_norm: f64,
    pub precision: Precision,

    // ensemble
    pub rmdl_models_per_family: usize,
    pub rmdl_epochs: usize,
    pub rmdl_dnn_layers: [usize; 2],
    pub rmdl_cnn_branches: [usize; 2],
    pub rmdl_rnn_layers: [usize; 2],
    pub rmdl_nodes: [usize; 2],
    pub rmdl_kernel_widths: [usize; 2],

    // run
    pub seed: u64,
    pub paper_scale: bool,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Grid worker cap; 0 uses every core.
    pub workers: usize,
    /// Grid filter by model name; empty runs everything.
    pub only: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let classic = ClassicConfig::default();
        let neural = NeuralConfig::default();
        let ens = EnsembleConfig::default();
        let pair = |r: Range| [r.min, r.max];
        RunConfig {
            train_path: "data/Constraint_Train.csv".into(),
            validation_path: "data/Constraint_Val.csv".into(),
            test_path: "data/english_test_with_labels.csv".into(),
            format: TableFormat::Csv,
            id_column: "id".into(),
            text_column: "tweet".into(),
            label_column: "label".into(),
            synthetic: None,
            embeddings_path: "data/glove.twitter.27B.50d.txt".into(),
            embedding_dim: 50,
            embeddings_url: GLOVE_URL.into(),
            embeddings_member: "glove.twitter.27B.50d.txt".into(),
            embeddings_sha256: String::new(),
            drop_numeric: true,
            stem: true,
            stoplist_path: None,
            min_df: 1,
            l2_normalize: false,
            max_len: 128,
            nb_alpha: classic.nb_alpha,
            knn_k: classic.knn_k,
            rf_trees: classic.rf_trees,
            rf_min_samples_leaf: classic.rf_min_samples_leaf,
            gb_estimators: classic.gb_estimators,
            gb_learning_rate: classic.gb_learning_rate,
            gb_max_depth: classic.gb_max_depth,
            dnn_widths: neural.dnn_widths,
            cnn_kernel_widths: neural.cnn_kernel_widths,
            cnn_filters: neural.cnn_filters,
            rnn_hidden: neural.rnn_hidden,
            rnn_layers: neural.rnn_layers,
            rnn_max_len: neural.rnn_max_len,
            dropout: neural.dropout,
            tfidf_chunk: neural.tfidf_chunk,
            epochs: neural.epochs,
            batch_size: neural.batch_size,
            learning_rate: neural.learning_rate,
            rnn_clip_norm: neural.rnn_clip_norm,
            precision: Precision::F64,
            rmdl_models_per_family: ens.models_per_family,
            rmdl_epochs: ens.epochs,
            rmdl_dnn_layers: pair(ens.dnn_layers),
            rmdl_cnn_branches: pair(ens.cnn_branches),
            rmdl_rnn_layers: pair(ens.rnn_layers),
            rmdl_nodes: pair(ens.nodes),
            rmdl_kernel_widths: pair(ens.cnn_kernel_width),
            seed: 42,
            paper_scale: false,
            output_dir: "runs".into(),
            cache_dir: "cache".into(),
            workers: 0,
            only: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration as `config.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn table_options(&self) -> TableOptions {
        TableOptions {
            format: self.format,
            id_column: self.id_column.clone(),
            text_column: self.text_column.clone(),
            label_column: self.label_column.clone(),
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            drop_numeric: self.drop_numeric,
            stem: self.stem,
            stoplist_path: self.stoplist_path.clone(),
        }
    }

    pub fn synthetic_config(&self) -> Option<SyntheticConfig> {
        self.synthetic.map(|total| SyntheticConfig {
            embedding_dim: self.embedding_dim,
            ..SyntheticConfig::with_total(total)
        })
    }

    pub fn classic(&self) -> ClassicConfig {
        ClassicConfig {
            nb_alpha: self.nb_alpha,
            knn_k: self.knn_k,
            rf_trees: self.rf_trees,
            rf_min_samples_leaf: self.rf_min_samples_leaf,
            gb_estimators: self.gb_estimators,
            gb_learning_rate: self.gb_learning_rate,
            gb_max_depth: self.gb_max_depth,
        }
    }

    /// Neural sizes, with the paper-scale profile applied when requested.
    pub fn neural(&self) -> NeuralConfig {
        let cfg = NeuralConfig {
            dnn_widths: self.dnn_widths.clone(),
            cnn_kernel_widths: self.cnn_kernel_widths.clone(),
            cnn_filters: self.cnn_filters,
            rnn_hidden: self.rnn_hidden,
            rnn_layers: self.rnn_layers,
            rnn_max_len: self.rnn_max_len,
            dropout: self.dropout,
            tfidf_chunk: self.tfidf_chunk,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            rnn_clip_norm: self.rnn_clip_norm,
        };
        if self.paper_scale {
            cfg.paper_scale(self.max_len)
        } else {
            cfg
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        let range = |p: [usize; 2]| Range::new(p[0], p[1]);
        EnsembleConfig {
            models_per_family: self.rmdl_models_per_family,
            epochs: self.rmdl_epochs,
            dnn_layers: range(self.rmdl_dnn_layers),
            cnn_branches: range(self.rmdl_cnn_branches),
            rnn_layers: range(self.rmdl_rnn_layers),
            nodes: range(self.rmdl_nodes),
            cnn_kernel_width: range(self.rmdl_kernel_widths),
            dropout: self.dropout,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            rnn_clip_norm: self.rnn_clip_norm,
            rnn_max_len: if self.paper_scale { self.max_len } else { self.rnn_max_len },
            tfidf_chunk: self.tfidf_chunk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("max_len and embedding_dim must be at least 1".into()));
        }
        if self.min_df == 0 {
            return Err(Error::Config("min_df must be at least 1".into()));
        }
        self.ensemble().validate()?;
        self.neural().train_config(crate::kinds::ModelKind::Dnn, 0).validate()
    }
}
