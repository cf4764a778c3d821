//! Featurization: sparse TF-IDF rows, pooled embedding vectors and padded index
//! sequences over a pretrained embedding table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod embedding;
pub mod tfidf;

pub use embedding::{
    embed_mean, encode_sequence, load_embeddings, read_embeddings, EmbeddingTable, IndexSequence, LineIssue, LineIssueKind,
    LoadedEmbeddings,
};
pub use tfidf::{build_vocab, inverse_doc_frequency, term_frequency, tfidf_vector, TfidfVectorizer, Vocabulary};

/// Sparse row with strictly increasing indices and no explicit zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// `indices` must be strictly increasing and below `dim`; zero entries are dropped.
    pub fn from_sorted(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| (i as usize) < dim));
        let (indices, values) = indices.into_iter().zip(values).filter(|&(_, v)| v != 0.0).unzip();
        SparseVector { dim, indices, values }
    }

    /// Builds from unordered pairs, summing duplicates.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::Shape(format!("index {i} out of range for dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry {i}")));
            }
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(Self::from_sorted(dim, indices, values))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l2_normalize(&mut self) {
        let norm = self.norm();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut sum = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        sum
    }
}

/// Row-major feature matrix in either sparse or dense layout.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    Sparse { dim: usize, rows: Vec<SparseVector> },
    Dense { dim: usize, data: Vec<f64> },
}

impl FeatureMatrix {
    pub fn sparse(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(FeatureMatrix::Sparse { dim, rows })
    }

    pub fn dense(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 && !data.is_empty() || dim > 0 && data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "dense data of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(FeatureMatrix::Dense { dim, data })
    }

    pub fn from_dense_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::dense(dim, data)
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMatrix::Sparse { dim, .. } | FeatureMatrix::Dense { dim, .. } => *dim,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows.len(),
            FeatureMatrix::Dense { dim, data } => {
                if *dim == 0 {
                    0
                } else {
                    data.len() / dim
                }
            }
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureMatrix::Sparse { .. })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows[row].get(col),
            FeatureMatrix::Dense { dim, data } => data[row * dim + col],
        }
    }

    /// Non-zero entries of a row (all entries for dense rows).
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows[row].iter().collect(),
            FeatureMatrix::Dense { dim, data } => data[row * dim..(row + 1) * dim]
                .iter()
                .copied()
                .enumerate()
                .collect(),
        }
    }

    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows[row].to_dense(),
            FeatureMatrix::Dense { dim, data } => data[row * dim..(row + 1) * dim].to_vec(),
        }
    }

    pub fn min_value(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |col: usize, v: f64| {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((col, v));
            }
        };
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows.iter().flat_map(|r| r.iter()).for_each(|(c, v)| consider(c, v)),
            FeatureMatrix::Dense { dim, data } => data
                .iter()
                .enumerate()
                .for_each(|(i, &v)| consider(i % dim.max(&1), v)),
        }
        best
    }

    /// Selects rows by index, preserving the layout.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        match self {
            FeatureMatrix::Sparse { dim, rows } => FeatureMatrix::Sparse {
                dim: *dim,
                rows: indices.iter().map(|&i| rows[i].clone()).collect(),
            },
            FeatureMatrix::Dense { dim, data } => FeatureMatrix::Dense {
                dim: *dim,
                data: indices
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}
