//! Conventional classifiers: multinomial naive Bayes, k-nearest neighbours,
//! random forest and gradient-boosted trees.

mod boosting;
mod forest;
mod knn;
mod naive_bayes;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use boosting::{BoostingParams, GradientBoosting};
pub use forest::{bootstrap_counts, ForestParams, RandomForest};
pub use knn::{Knn, KnnMetric};
pub use naive_bayes::MultinomialNb;
pub use tree::{Tree, TreeNode};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::kinds::{FeaturizerKind, ModelKind};

/// Hard labels plus the score of the `real` class for every row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub prob_real: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Score of the predicted label: `prob_real` for real rows, `1 - prob_real` otherwise.
    pub fn confidence(&self, row: usize) -> f64 {
        if self.labels[row] == 1 {
            self.prob_real[row]
        } else {
            1.0 - self.prob_real[row]
        }
    }
}

/// Hyperparameters of the four conventional models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicConfig {
    pub nb_alpha: f64,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub rf_min_samples_leaf: usize,
    pub gb_estimators: usize,
    pub gb_learning_rate: f64,
    pub gb_max_depth: usize,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        ClassicConfig {
            nb_alpha: 1.0,
            knn_k: 6,
            rf_trees: 64,
            rf_min_samples_leaf: 1,
            gb_estimators: 100,
            gb_learning_rate: 0.1,
            gb_max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    NaiveBayes(MultinomialNb),
    Knn(Knn),
    RandomForest(RandomForest),
    GradientBoost(GradientBoosting),
}

/// What a fit produced besides the model: settings actually used and anything worth flagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub featurizer: FeaturizerKind,
    pub seed: u64,
    pub duration_secs: f64,
    pub hyperparameters: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierModel::NaiveBayes(_) => ModelKind::MultinomialNb,
            ClassifierModel::Knn(_) => ModelKind::Knn,
            ClassifierModel::RandomForest(_) => ModelKind::RandomForest,
            ClassifierModel::GradientBoost(_) => ModelKind::GradientBoost,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClassifierModel::NaiveBayes(m) => m.dim(),
            ClassifierModel::Knn(m) => m.dim(),
            ClassifierModel::RandomForest(m) => m.dim(),
            ClassifierModel::GradientBoost(m) => m.dim(),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        match self {
            ClassifierModel::NaiveBayes(m) => m.predict(x),
            ClassifierModel::Knn(m) => m.predict(x),
            ClassifierModel::RandomForest(m) => m.predict(x),
            ClassifierModel::GradientBoost(m) => m.predict(x),
        }
    }

    /// Per-feature importance scores: naive Bayes log-likelihood ratios or tree impurity decrease.
    pub fn importances(&self) -> Result<Vec<f64>> {
        match self {
            ClassifierModel::NaiveBayes(m) => Ok(m.log_ratios()),
            ClassifierModel::RandomForest(m) => Ok(m.importances().to_vec()),
            ClassifierModel::GradientBoost(m) => Ok(m.importances().to_vec()),
            ClassifierModel::Knn(_) => Err(Error::Unsupported(
                "k-nearest neighbours has no per-feature importances".into(),
            )),
        }
    }

    /// Fits the model `kind` with settings from `config`. Returns the model and its report.
    pub fn fit(
        kind: ModelKind,
        featurizer: FeaturizerKind,
        x: &FeatureMatrix,
        y: &[usize],
        config: &ClassicConfig,
        seed: u64,
    ) -> Result<(ClassifierModel, FitReport)> {
        if !kind.supports(featurizer) {
            return Err(Error::Unsupported(format!(
                "{} cannot be trained on {} features: multinomial naive Bayes requires non-negative inputs",
                kind.display_name(),
                featurizer.display_name()
            )));
        }
        check_labels(x, y)?;
        let start = std::time::Instant::now();
        let mut hp = BTreeMap::new();
        let mut notes = Vec::new();
        let mut warnings = Vec::new();
        let model = match kind {
            ModelKind::MultinomialNb => {
                hp.insert("alpha".into(), config.nb_alpha.to_string());
                notes.push("smoothing alpha is not stated in the source experiment; Laplace default used".into());
                ClassifierModel::NaiveBayes(MultinomialNb::fit(x, y, config.nb_alpha)?)
            }
            ModelKind::Knn => {
                let metric = KnnMetric::for_matrix(x);
                hp.insert("k".into(), config.knn_k.to_string());
                hp.insert("metric".into(), metric.as_str().into());
                notes.push(format!(
                    "distance metric is not stated in the source experiment; {} chosen for {} input",
                    metric.as_str(),
                    if x.is_sparse() { "sparse" } else { "dense" }
                ));
                ClassifierModel::Knn(Knn::fit(x, y, config.knn_k, metric)?)
            }
            ModelKind::RandomForest => {
                let params = ForestParams {
                    n_trees: config.rf_trees,
                    min_samples_leaf: config.rf_min_samples_leaf,
                    ..ForestParams::default()
                };
                hp.insert("n_trees".into(), params.n_trees.to_string());
                hp.insert("min_samples_leaf".into(), params.min_samples_leaf.to_string());
                hp.insert("max_features".into(), "sqrt".into());
                let (m, w) = RandomForest::fit(x, y, &params, seed)?;
                warnings.extend(w);
                ClassifierModel::RandomForest(m)
            }
            ModelKind::GradientBoost => {
                let params = BoostingParams {
                    n_estimators: config.gb_estimators,
                    learning_rate: config.gb_learning_rate,
                    max_depth: config.gb_max_depth,
                };
                hp.insert("n_estimators".into(), params.n_estimators.to_string());
                hp.insert("learning_rate".into(), params.learning_rate.to_string());
                hp.insert("max_depth".into(), params.max_depth.to_string());
                notes.push("estimators and boosting epochs are read as one setting".into());
                let (m, w) = GradientBoosting::fit(x, y, &params, seed)?;
                warnings.extend(w);
                ClassifierModel::GradientBoost(m)
            }
            other => {
                return Err(Error::InvalidArgument(format!("{other} is not a conventional classifier")));
            }
        };
        if featurizer == FeaturizerKind::Embedding {
            notes.push("word-embedding features are the mean of in-vocabulary token vectors".into());
        }
        let report = FitReport {
            model: kind,
            featurizer,
            seed,
            duration_secs: start.elapsed().as_secs_f64(),
            hyperparameters: hp,
            notes,
            warnings,
        };
        Ok((model, report))
    }
}

pub(crate) fn check_labels(x: &FeatureMatrix, y: &[usize]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Shape(format!("{} feature rows but {} labels", x.n_rows(), y.len())));
    }
    if x.n_rows() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::LabelOutOfRange(bad));
    }
    Ok(())
}

/// Count of each class, `[fake, real]`.
pub(crate) fn class_counts(y: &[usize]) -> [usize; 2] {
    let mut c = [0; 2];
    for &l in y {
        c[l] += 1;
    }
    c
}
