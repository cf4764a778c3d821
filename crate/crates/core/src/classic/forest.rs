use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, SplitData, Target, Tree, TreeParams};
use super::{check_labels, class_counts, Predictions};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seeding::{derive_seed, rng_for, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 64,
            min_samples_leaf: 1,
            max_features: None,
            max_depth: None,
            bootstrap: true,
        }
    }
}

/// Bagged Gini trees with a per-tree majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub(crate) dim: usize,
    pub(crate) trees: Vec<Tree>,
    pub(crate) importances: Vec<f64>,
}

/// How many times each of `n` rows is drawn in the bootstrap sample of tree `tree`.
pub fn bootstrap_counts(seed: u64, tree: usize, n: usize) -> Vec<f64> {
    let mut rng = rng_for(derive_seed(seed, streams::FOREST), 2 * tree as u64);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

impl RandomForest {
    /// Fits the forest. A single-class training set yields a constant model and a warning.
    pub fn fit(x: &FeatureMatrix, y: &[usize], params: &ForestParams, seed: u64) -> Result<(Self, Vec<String>)> {
        check_labels(x, y)?;
        if params.n_trees == 0 {
            return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
        }
        if params.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        let counts = class_counts(y);
        if counts[0] == 0 || counts[1] == 0 {
            warnings.push(format!(
                "training data holds a single class; every tree predicts `{}`",
                if counts[1] == 0 { "fake" } else { "real" }
            ));
        }
        let dim = x.dim();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf as f64,
            max_features: params
                .max_features
                .unwrap_or_else(|| ((dim as f64).sqrt().round() as usize).max(1)),
        };
        let data = SplitData::new(x);
        let n = y.len();
        let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let weights = if params.bootstrap {
                    bootstrap_counts(seed, t, n)
                } else {
                    vec![1.0; n]
                };
                let mut rng = rng_for(derive_seed(seed, streams::FOREST), 2 * t as u64 + 1);
                grow(&data, &Target::Classes(y), &weights, &tree_params, &mut rng)
            })
            .collect();
        let mut importances = vec![0.0; dim];
        for (_, imp) in &grown {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                for (acc, v) in importances.iter_mut().zip(imp) {
                    *acc += v / total;
                }
            }
        }
        let n_trees = grown.len() as f64;
        importances.iter_mut().for_each(|v| *v /= n_trees);
        let trees = grown.into_iter().map(|(t, _)| t).collect();
        Ok((RandomForest { dim, trees, importances }, warnings))
    }

    pub fn from_parts(dim: usize, trees: Vec<Tree>, importances: Vec<f64>) -> Result<Self> {
        if trees.is_empty() || importances.len() != dim {
            return Err(Error::Container("forest needs at least one tree and one importance per feature".into()));
        }
        Ok(RandomForest { dim, trees, importances })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean over trees of each tree's normalized Gini decrease.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// Label 1 only on a strict majority of tree votes, so an even split goes to 0.
    /// The score is the fraction of trees voting 1.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        x.check_dim(self.dim)?;
        let fractions: Vec<f64> = (0..x.n_rows())
            .into_par_iter()
            .map(|row| {
                let votes = self.trees.iter().filter(|t| t.predict_row(x, row) > 0.5).count();
                votes as f64 / self.trees.len() as f64
            })
            .collect();
        Ok(Predictions {
            labels: fractions.iter().map(|&f| usize::from(f > 0.5)).collect(),
            prob_real: fractions,
        })
    }
}
