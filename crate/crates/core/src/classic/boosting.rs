use serde::{Deserialize, Serialize};

use super::tree::{grow, SplitData, Target, Tree, TreeParams};
use super::{check_labels, class_counts, Predictions};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seeding::{derive_seed, rng_for, streams};

/// Probabilities are kept in `[EPS, 1 - EPS]` for the prior and the loss.
const EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

/// Logistic-loss gradient boosting: `F(x) = init + lr * sum_m tree_m(x)`, `P(real) = sigmoid(F)`.
/// Each tree fits the residuals `y - p` and its leaves take a Newton step `sum r / sum p(1-p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub(crate) dim: usize,
    pub(crate) init: f64,
    pub(crate) learning_rate: f64,
    pub(crate) trees: Vec<Tree>,
    pub(crate) importances: Vec<f64>,
    pub(crate) stage_losses: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_loss(y: &[usize], p: &[f64]) -> f64 {
    let s: f64 = y
        .iter()
        .zip(p)
        .map(|(&l, &p)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if l == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    s / y.len() as f64
}

impl GradientBoosting {
    /// Fits the booster. A single-class training set yields a constant log-odds model and a warning.
    pub fn fit(x: &FeatureMatrix, y: &[usize], params: &BoostingParams, seed: u64) -> Result<(Self, Vec<String>)> {
        check_labels(x, y)?;
        if params.n_estimators == 0 {
            return Err(Error::InvalidArgument("boosting needs at least one estimator".into()));
        }
        if params.max_depth == 0 || !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "boosting needs max_depth >= 1 and a positive finite learning rate".into(),
            ));
        }
        let dim = x.dim();
        let counts = class_counts(y);
        let prior = (counts[1] as f64 / y.len() as f64).clamp(EPS, 1.0 - EPS);
        let init = (prior / (1.0 - prior)).ln() as f32 as f64;
        let mut model = GradientBoosting {
            dim,
            init,
            learning_rate: params.learning_rate,
            trees: Vec::new(),
            importances: vec![0.0; dim],
            stage_losses: Vec::new(),
        };
        if counts[0] == 0 || counts[1] == 0 {
            let warning = format!(
                "training data holds a single class; the model is the constant log-odds {init:.4}"
            );
            return Ok((model, vec![warning]));
        }
        let n = y.len();
        let mut score = vec![init; n];
        let data = SplitData::new(x);
        let tree_params = TreeParams {
            max_depth: Some(params.max_depth),
            min_samples_leaf: 1.0,
            max_features: dim,
        };
        let weights = vec![1.0; n];
        let mut raw_importances = vec![0.0; dim];
        for stage in 0..params.n_estimators {
            let p: Vec<f64> = score.iter().map(|&f| sigmoid(f)).collect();
            let r: Vec<f64> = y.iter().zip(&p).map(|(&l, &p)| l as f64 - p).collect();
            let h: Vec<f64> = p.iter().map(|&p| p * (1.0 - p)).collect();
            let mut rng = rng_for(derive_seed(seed, streams::BOOSTING), stage as u64);
            let (tree, imp) = grow(&data, &Target::Residuals { r: &r, h: &h }, &weights, &tree_params, &mut rng);
            for (acc, v) in raw_importances.iter_mut().zip(&imp) {
                *acc += v;
            }
            for (row, s) in score.iter_mut().enumerate() {
                *s += params.learning_rate * tree.predict_row(x, row);
            }
            model.trees.push(tree);
            let p: Vec<f64> = score.iter().map(|&f| sigmoid(f)).collect();
            model.stage_losses.push(log_loss(y, &p));
        }
        let total: f64 = raw_importances.iter().sum();
        if total > 0.0 {
            model.importances = raw_importances.iter().map(|v| v / total).collect();
        }
        Ok((model, Vec::new()))
    }

    pub fn from_parts(
        dim: usize,
        init: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
        importances: Vec<f64>,
    ) -> Result<Self> {
        if importances.len() != dim {
            return Err(Error::Container("one importance per feature expected".into()));
        }
        Ok(GradientBoosting {
            dim,
            init,
            learning_rate,
            trees,
            importances,
            stage_losses: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn init(&self) -> f64 {
        self.init
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// Mean training log loss after each stage.
    pub fn stage_losses(&self) -> &[f64] {
        &self.stage_losses
    }

    /// Additive log-odds score of every row.
    pub fn decision_function(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        x.check_dim(self.dim)?;
        Ok((0..x.n_rows())
            .map(|row| {
                self.init
                    + self
                        .trees
                        .iter()
                        .map(|t| self.learning_rate * t.predict_row(x, row))
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        let prob_real: Vec<f64> = self.decision_function(x)?.into_iter().map(sigmoid).collect();
        Ok(Predictions {
            labels: prob_real.iter().map(|&p| usize::from(p > 0.5)).collect(),
            prob_real,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (FeatureMatrix, Vec<usize>) {
        let x = FeatureMatrix::dense(1, (0..12).map(|i| i as f64 * 0.5).collect()).unwrap();
        (x, (0..12).map(|i| usize::from(i >= 5)).collect())
    }

    #[test]
    fn fits_toy_and_loss_decreases() {
        let (x, y) = toy();
        let (gb, w) = GradientBoosting::fit(&x, &y, &BoostingParams::default(), 0).unwrap();
        assert!(w.is_empty());
        assert_eq!(gb.predict(&x).unwrap().labels, y);
        for pair in gb.stage_losses().windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        let p = gb.predict(&x).unwrap();
        assert!(p.prob_real.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_stage_model_predicts_prior() {
        let (x, y) = toy();
        let gb = GradientBoosting::from_parts(1, (7.0f64 / 5.0).ln(), 0.1, Vec::new(), vec![0.0]).unwrap();
        let p = gb.predict(&x).unwrap();
        assert!(p.prob_real.iter().all(|&v| (v - 7.0 / 12.0).abs() < 1e-12));
        assert!(p.labels.iter().all(|&l| l == 1));
        let _ = y;
    }

    #[test]
    fn single_class_is_constant() {
        let (x, _) = toy();
        let (gb, w) = GradientBoosting::fit(&x, &[0; 12], &BoostingParams::default(), 0).unwrap();
        assert_eq!(w.len(), 1);
        assert!(gb.trees().is_empty());
        assert!(gb.predict(&x).unwrap().labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
