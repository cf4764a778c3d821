use serde::{Deserialize, Serialize};

use super::{check_labels, class_counts, Predictions};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Smallest smoothing actually applied; `alpha = 0` would give `ln 0` for unseen terms.
const MIN_ALPHA: f64 = 1e-10;

/// Multinomial naive Bayes over non-negative (possibly fractional) term weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNb {
    pub(crate) dim: usize,
    pub(crate) alpha: f64,
    pub(crate) class_log_prior: [f64; 2],
    /// `feature_log_prob[c][j] = ln P(term j | class c)`.
    pub(crate) feature_log_prob: [Vec<f64>; 2],
}

impl MultinomialNb {
    pub fn fit(x: &FeatureMatrix, y: &[usize], alpha: f64) -> Result<Self> {
        check_labels(x, y)?;
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be >= 0, got {alpha}")));
        }
        if let Some((column, value)) = x.min_value().filter(|&(_, v)| v < 0.0) {
            return Err(Error::NegativeFeature { column, value });
        }
        let alpha = alpha.max(MIN_ALPHA);
        let dim = x.dim();
        let mut counts = [vec![0.0; dim], vec![0.0; dim]];
        for (row, &label) in y.iter().enumerate() {
            for (j, v) in x.row_entries(row) {
                counts[label][j] += v;
            }
        }
        let n = class_counts(y);
        let total = y.len() as f64;
        let class_log_prior = [(n[0] as f64 / total).ln(), (n[1] as f64 / total).ln()];
        let feature_log_prob = counts.map(|c| {
            let denom = c.iter().sum::<f64>() + alpha * dim as f64;
            c.iter().map(|&v| ((v + alpha) / denom).ln()).collect::<Vec<_>>()
        });
        Ok(MultinomialNb {
            dim,
            alpha,
            class_log_prior,
            feature_log_prob,
        })
    }

    /// Rebuilds a fitted model from its tables.
    pub fn from_parts(alpha: f64, class_log_prior: [f64; 2], feature_log_prob: [Vec<f64>; 2]) -> Result<Self> {
        let dim = feature_log_prob[0].len();
        if feature_log_prob[1].len() != dim {
            return Err(Error::Container("per-class likelihood tables differ in length".into()));
        }
        Ok(MultinomialNb {
            dim,
            alpha,
            class_log_prior,
            feature_log_prob,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn class_log_prior(&self) -> [f64; 2] {
        self.class_log_prior
    }

    pub fn feature_log_prob(&self, class: usize) -> &[f64] {
        &self.feature_log_prob[class]
    }

    /// Posterior `[P(fake | x), P(real | x)]` for each row.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<[f64; 2]>> {
        x.check_dim(self.dim)?;
        if let Some((column, value)) = x.min_value().filter(|&(_, v)| v < 0.0) {
            return Err(Error::NegativeFeature { column, value });
        }
        Ok((0..x.n_rows())
            .map(|row| {
                let mut jll = self.class_log_prior;
                for (j, v) in x.row_entries(row) {
                    jll[0] += v * self.feature_log_prob[0][j];
                    jll[1] += v * self.feature_log_prob[1][j];
                }
                let m = jll[0].max(jll[1]);
                let e = [(jll[0] - m).exp(), (jll[1] - m).exp()];
                let z = e[0] + e[1];
                [e[0] / z, e[1] / z]
            })
            .collect())
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        let proba = self.predict_proba(x)?;
        Ok(Predictions {
            labels: proba.iter().map(|p| usize::from(p[1] > p[0])).collect(),
            prob_real: proba.iter().map(|p| p[1]).collect(),
        })
    }

    /// `ln P(term | real) - ln P(term | fake)`; large magnitudes mark discriminative terms.
    pub fn log_ratios(&self) -> Vec<f64> {
        self.feature_log_prob[1]
            .iter()
            .zip(&self.feature_log_prob[0])
            .map(|(a, b)| a - b)
            .collect()
    }
}
