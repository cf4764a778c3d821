use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_labels, Predictions};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMetric {
    /// `1 - cos(a, b)`; a zero vector has similarity 0 with everything.
    Cosine,
    Euclidean,
}

impl KnnMetric {
    /// Cosine for sparse term weights, Euclidean for dense pooled vectors.
    pub fn for_matrix(x: &FeatureMatrix) -> Self {
        if x.is_sparse() {
            KnnMetric::Cosine
        } else {
            KnnMetric::Euclidean
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KnnMetric::Cosine => "cosine",
            KnnMetric::Euclidean => "euclidean",
        }
    }
}

/// k-nearest-neighbour majority vote. Even-k ties go to the nearest neighbour's label.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub(crate) k: usize,
    pub(crate) metric: KnnMetric,
    pub(crate) train: FeatureMatrix,
    pub(crate) labels: Vec<usize>,
    norms: Vec<f64>,
}

impl Knn {
    pub fn fit(x: &FeatureMatrix, y: &[usize], k: usize, metric: KnnMetric) -> Result<Self> {
        check_labels(x, y)?;
        if k == 0 || k > y.len() {
            return Err(Error::InvalidArgument(format!(
                "k must be between 1 and the training size {}, got {k}",
                y.len()
            )));
        }
        let norms = (0..x.n_rows()).map(|r| row_norm(x, r)).collect();
        Ok(Knn {
            k,
            metric,
            train: x.clone(),
            labels: y.to_vec(),
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> KnnMetric {
        self.metric
    }

    pub fn train_matrix(&self) -> &FeatureMatrix {
        &self.train
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.labels
    }

    /// Distance from query row `q` of `x` to training row `t`.
    fn distance(&self, x: &FeatureMatrix, q: usize, q_norm: f64, t: usize) -> f64 {
        match self.metric {
            KnnMetric::Cosine => {
                let denom = q_norm * self.norms[t];
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - row_dot(x, q, &self.train, t) / denom
                }
            }
            KnnMetric::Euclidean => match (x, &self.train) {
                (FeatureMatrix::Dense { dim, data }, FeatureMatrix::Dense { data: td, .. }) => data
                    [q * dim..(q + 1) * dim]
                    .iter()
                    .zip(&td[t * dim..(t + 1) * dim])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                _ => {
                    let sq = q_norm * q_norm + self.norms[t] * self.norms[t] - 2.0 * row_dot(x, q, &self.train, t);
                    sq.max(0.0).sqrt()
                }
            },
        }
    }

    /// The k nearest training rows to query row `q`, ordered by (distance, index).
    pub fn neighbours(&self, x: &FeatureMatrix, q: usize) -> Vec<(f64, usize)> {
        let q_norm = row_norm(x, q);
        let mut d: Vec<(f64, usize)> = (0..self.labels.len())
            .map(|t| (self.distance(x, q, q_norm, t), t))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        x.check_dim(self.dim())?;
        let votes: Vec<(usize, f64)> = (0..x.n_rows())
            .into_par_iter()
            .map(|q| {
                let nn = self.neighbours(x, q);
                let real = nn.iter().filter(|&&(_, t)| self.labels[t] == 1).count();
                let label = match (2 * real).cmp(&self.k) {
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Less => 0,
                    std::cmp::Ordering::Equal => self.labels[nn[0].1],
                };
                (label, real as f64 / self.k as f64)
            })
            .collect();
        Ok(Predictions {
            labels: votes.iter().map(|v| v.0).collect(),
            prob_real: votes.iter().map(|v| v.1).collect(),
        })
    }
}

fn row_norm(x: &FeatureMatrix, r: usize) -> f64 {
    match x {
        FeatureMatrix::Sparse { rows, .. } => rows[r].norm(),
        FeatureMatrix::Dense { dim, data } => data[r * dim..(r + 1) * dim].iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn row_dot(a: &FeatureMatrix, i: usize, b: &FeatureMatrix, j: usize) -> f64 {
    match (a, b) {
        (FeatureMatrix::Sparse { rows: ra, .. }, FeatureMatrix::Sparse { rows: rb, .. }) => ra[i].dot(&rb[j]),
        (FeatureMatrix::Dense { dim, data: da }, FeatureMatrix::Dense { data: db, .. }) => da[i * dim..(i + 1) * dim]
            .iter()
            .zip(&db[j * dim..(j + 1) * dim])
            .map(|(x, y)| x * y)
            .sum(),
        (FeatureMatrix::Sparse { rows, .. }, dense) => sparse_dense_dot(&rows[i], dense, j),
        (dense, FeatureMatrix::Sparse { rows, .. }) => sparse_dense_dot(&rows[j], dense, i),
    }
}

fn sparse_dense_dot(s: &SparseVector, dense: &FeatureMatrix, row: usize) -> f64 {
    s.iter().map(|(c, v)| v * dense.get(row, c)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> FeatureMatrix {
        FeatureMatrix::dense(1, points.to_vec()).unwrap()
    }

    #[test]
    fn k1_returns_matching_point_label() {
        let x = line(&[0.0, 1.0, 2.0, 3.0]);
        let knn = Knn::fit(&x, &[0, 1, 0, 1], 1, KnnMetric::Euclidean).unwrap();
        assert_eq!(knn.predict(&x).unwrap().labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn majority_and_tie_rules() {
        // Four real and two fake neighbours.
        let x = line(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 100.0]);
        let knn = Knn::fit(&x, &[0, 1, 1, 0, 1, 1, 0], 6, KnnMetric::Euclidean).unwrap();
        let p = knn.predict(&line(&[0.0])).unwrap();
        assert_eq!(p.labels, vec![1]);
        assert!((p.prob_real[0] - 4.0 / 6.0).abs() < 1e-15);

        // Three-three split; the nearest point is fake.
        let knn = Knn::fit(&x, &[0, 1, 1, 0, 1, 0, 1], 6, KnnMetric::Euclidean).unwrap();
        assert_eq!(knn.predict(&line(&[0.0])).unwrap().labels, vec![0]);
    }

    #[test]
    fn invalid_k_rejected() {
        let x = line(&[0.0, 1.0]);
        assert!(Knn::fit(&x, &[0, 1], 3, KnnMetric::Euclidean).is_err());
        assert!(Knn::fit(&x, &[0, 1], 0, KnnMetric::Euclidean).is_err());
        assert!(Knn::fit(&line(&[]), &[], 1, KnnMetric::Euclidean).is_err());
    }

    #[test]
    fn cosine_ignores_scale() {
        let rows = vec![
            SparseVector::from_pairs(2, vec![(0, 1.0)]).unwrap(),
            SparseVector::from_pairs(2, vec![(1, 1.0)]).unwrap(),
        ];
        let x = FeatureMatrix::sparse(2, rows).unwrap();
        let knn = Knn::fit(&x, &[0, 1], 1, KnnMetric::Cosine).unwrap();
        let q = FeatureMatrix::sparse(2, vec![SparseVector::from_pairs(2, vec![(1, 50.0), (0, 1.0)]).unwrap()]).unwrap();
        assert_eq!(knn.predict(&q).unwrap().labels, vec![1]);
    }
}
