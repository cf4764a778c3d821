//! Model and featurizer identifiers shared by training, reporting and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    MultinomialNb,
    GradientBoost,
    Knn,
    Dnn,
    Cnn,
    Gru,
    Lstm,
    Rmdl,
}

impl ModelKind {
    /// Row order of the comparison table.
    pub const ALL: [ModelKind; 9] = [
        ModelKind::RandomForest,
        ModelKind::MultinomialNb,
        ModelKind::GradientBoost,
        ModelKind::Knn,
        ModelKind::Dnn,
        ModelKind::Cnn,
        ModelKind::Gru,
        ModelKind::Lstm,
        ModelKind::Rmdl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rf",
            ModelKind::MultinomialNb => "nb",
            ModelKind::GradientBoost => "gb",
            ModelKind::Knn => "knn",
            ModelKind::Dnn => "dnn",
            ModelKind::Cnn => "cnn",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
            ModelKind::Rmdl => "rmdl",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "Random Forest",
            ModelKind::MultinomialNb => "Naive Bayes",
            ModelKind::GradientBoost => "Gradient Boost",
            ModelKind::Knn => "KNN",
            ModelKind::Dnn => "DNN",
            ModelKind::Cnn => "CNN",
            ModelKind::Gru => "RNN (GRU)",
            ModelKind::Lstm => "RNN (LSTM)",
            ModelKind::Rmdl => "RMDL",
        }
    }

    pub fn is_classic(self) -> bool {
        matches!(
            self,
            ModelKind::RandomForest | ModelKind::MultinomialNb | ModelKind::GradientBoost | ModelKind::Knn
        )
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Dnn | ModelKind::Cnn | ModelKind::Gru | ModelKind::Lstm)
    }

    /// Whether the (model, featurizer) cell can be trained at all.
    pub fn supports(self, featurizer: FeaturizerKind) -> bool {
        !(self == ModelKind::MultinomialNb && featurizer == FeaturizerKind::Embedding)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "rf" | "random_forest" => ModelKind::RandomForest,
            "nb" | "naive_bayes" | "multinomial_nb" => ModelKind::MultinomialNb,
            "gb" | "gradient_boost" => ModelKind::GradientBoost,
            "knn" => ModelKind::Knn,
            "dnn" => ModelKind::Dnn,
            "cnn" => ModelKind::Cnn,
            "gru" => ModelKind::Gru,
            "lstm" => ModelKind::Lstm,
            "rmdl" => ModelKind::Rmdl,
            _ => return Err(Error::InvalidArgument(format!("unknown model kind `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerKind {
    Tfidf,
    Embedding,
}

impl FeaturizerKind {
    pub const ALL: [FeaturizerKind; 2] = [FeaturizerKind::Tfidf, FeaturizerKind::Embedding];

    pub fn as_str(self) -> &'static str {
        match self {
            FeaturizerKind::Tfidf => "tfidf",
            FeaturizerKind::Embedding => "embedding",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeaturizerKind::Tfidf => "TFIDF",
            FeaturizerKind::Embedding => "Word Embedding",
        }
    }
}

impl fmt::Display for FeaturizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeaturizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tfidf" | "tf-idf" => Ok(FeaturizerKind::Tfidf),
            "embedding" | "embeddings" | "glove" => Ok(FeaturizerKind::Embedding),
            _ => Err(Error::InvalidArgument(format!("unknown featurizer `{s}`"))),
        }
    }
}
