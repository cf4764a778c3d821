//! CART growth over sparse or dense feature matrices.
//!
//! Classification trees split on Gini impurity; regression trees (used by boosting)
//! split on squared error of the residuals. Both reduce to maximizing
//! `score(left) + score(right)` with `score(s) = (s0^2 + s1^2) / w`.
//!
//! Thresholds and leaf values are rounded to `f32` when the tree is grown, so a tree
//! stored with `f32` payloads predicts identically after reloading.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A grown tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(row, *feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Flat encoding, five values per node: feature (-1 for leaves), threshold, left, right, leaf value.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.nodes.len() * 5);
        for node in &self.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => out.extend([*feature as f32, *threshold as f32, *left as f32, *right as f32, 0.0]),
                TreeNode::Leaf { value } => out.extend([-1.0, 0.0, 0.0, 0.0, *value as f32]),
            }
        }
        out
    }

    pub fn from_flat(flat: &[f32]) -> Option<Tree> {
        if flat.len() % 5 != 0 {
            return None;
        }
        let n = flat.len() / 5;
        let mut nodes = Vec::with_capacity(n);
        for c in flat.chunks_exact(5) {
            if c[0] < 0.0 {
                nodes.push(TreeNode::Leaf { value: c[4] as f64 });
            } else {
                let (left, right) = (c[2] as usize, c[3] as usize);
                if left >= n || right >= n {
                    return None;
                }
                nodes.push(TreeNode::Split {
                    feature: c[0] as u32,
                    threshold: c[1] as f64,
                    left: left as u32,
                    right: right as u32,
                });
            }
        }
        Some(Tree { nodes })
    }
}

/// Weighted class or residual sums for a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Stats {
    w: f64,
    s0: f64,
    s1: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.w += o.w;
        self.s0 += o.s0;
        self.s1 += o.s1;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            s0: self.s0 - o.s0,
            s1: self.s1 - o.s1,
        }
    }

    fn score(&self) -> f64 {
        if self.w <= 0.0 {
            0.0
        } else {
            (self.s0 * self.s0 + self.s1 * self.s1) / self.w
        }
    }
}

pub(crate) enum Target<'a> {
    /// Labels in {0, 1}; leaves store the weighted share of class 1.
    Classes(&'a [usize]),
    /// Residuals and hessians; leaves store the Newton step `sum r / sum h`.
    Residuals { r: &'a [f64], h: &'a [f64] },
}

impl Target<'_> {
    fn stats(&self, row: usize, w: f64) -> Stats {
        match self {
            Target::Classes(y) => {
                if y[row] == 1 {
                    Stats { w, s0: 0.0, s1: w }
                } else {
                    Stats { w, s0: w, s1: 0.0 }
                }
            }
            Target::Residuals { r, .. } => Stats {
                w,
                s0: w * r[row],
                s1: 0.0,
            },
        }
    }

    fn is_pure(&self, s: &Stats) -> bool {
        match self {
            Target::Classes(_) => s.s0 == 0.0 || s.s1 == 0.0,
            Target::Residuals { .. } => false,
        }
    }

    fn leaf_value(&self, rows: &[u32], weights: &[f64], s: &Stats) -> f64 {
        let v = match self {
            Target::Classes(_) => {
                if s.w > 0.0 {
                    s.s1 / s.w
                } else {
                    0.0
                }
            }
            Target::Residuals { r, h } => {
                let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), &i| {
                    let w = weights[i as usize];
                    (n + w * r[i as usize], d + w * h[i as usize])
                });
                if den.abs() < 1e-150 {
                    0.0
                } else {
                    num / den
                }
            }
        };
        v as f32 as f64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: f64,
    pub max_features: usize,
}

/// Column-oriented view used for split search.
pub(crate) struct SplitData<'a> {
    x: &'a FeatureMatrix,
    /// Sparse columns as (row, value) sorted by value then row.
    columns: Option<Vec<Vec<(u32, f64)>>>,
}

impl<'a> SplitData<'a> {
    pub fn new(x: &'a FeatureMatrix) -> Self {
        let columns = match x {
            FeatureMatrix::Sparse { dim, rows } => {
                let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); *dim];
                for (r, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter() {
                        cols[j].push((r as u32, v));
                    }
                }
                for c in &mut cols {
                    c.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                }
                Some(cols)
            }
            FeatureMatrix::Dense { .. } => None,
        };
        SplitData { x, columns }
    }

    pub fn n_features(&self) -> usize {
        self.x.dim()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Strictly larger gain wins; near-equal gains fall back to (feature, threshold) order.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                let tol = 1e-12 * o.gain.abs().max(1.0);
                if self.gain > o.gain + tol {
                    true
                } else if self.gain >= o.gain - tol {
                    (self.feature, self.threshold) < (o.feature, o.threshold)
                } else {
                    false
                }
            }
        }
    }
}

/// A split point with `lo <= t < hi`, representable as `f32` when possible.
pub(crate) fn threshold_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    let t = mid as f32 as f64;
    if lo <= t && t < hi {
        return t;
    }
    let h = hi as f32;
    let below = if (h as f64) < hi { h } else { h.next_down() };
    if lo <= below as f64 && (below as f64) < hi {
        return below as f64;
    }
    mid
}

struct Scan<'s> {
    total: Stats,
    parent_score: f64,
    min_leaf: f64,
    feature: usize,
    cum: Stats,
    prev: Option<f64>,
    best: &'s mut Option<Candidate>,
}

impl Scan<'_> {
    fn push(&mut self, value: f64, s: &Stats) {
        if let Some(p) = self.prev {
            if value > p {
                let right = self.total.minus(&self.cum);
                if self.cum.w >= self.min_leaf && right.w >= self.min_leaf {
                    let gain = self.cum.score() + right.score() - self.parent_score;
                    let c = Candidate {
                        gain,
                        feature: self.feature,
                        threshold: threshold_between(p, value),
                    };
                    if c.beats(self.best) {
                        *self.best = Some(c);
                    }
                }
            }
        }
        self.cum.add(s);
        self.prev = Some(value);
    }
}

/// Grows one tree on rows with positive weight. Returns the tree and the raw
/// impurity decrease attributed to each feature.
pub(crate) fn grow<R: Rng + ?Sized>(
    data: &SplitData,
    target: &Target,
    weights: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> (Tree, Vec<f64>) {
    let n_features = data.n_features();
    let mut importances = vec![0.0; n_features];
    let mut features: Vec<usize> = (0..n_features).collect();
    let mut node_of = vec![u32::MAX; weights.len()];
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let root_rows: Vec<u32> = (0..weights.len() as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let mut stack = vec![(0usize, root_rows, 0usize)];
    let max_features = params.max_features.clamp(1, n_features.max(1));

    while let Some((idx, rows, depth)) = stack.pop() {
        let mut total = Stats::default();
        for &r in &rows {
            total.add(&target.stats(r as usize, weights[r as usize]));
        }
        let leaf = |rows: &[u32], total: &Stats| TreeNode::Leaf {
            value: target.leaf_value(rows, weights, total),
        };
        if target.is_pure(&total)
            || total.w < 2.0 * params.min_samples_leaf
            || params.max_depth.is_some_and(|d| depth >= d)
            || n_features == 0
        {
            nodes[idx] = leaf(&rows, &total);
            continue;
        }
        for &r in &rows {
            node_of[r as usize] = idx as u32;
        }
        let parent_score = total.score();
        let mut best: Option<Candidate> = None;
        for i in 0..n_features {
            let j = rng.random_range(i..n_features);
            features.swap(i, j);
            let feature = features[i];
            let mut scan = Scan {
                total,
                parent_score,
                min_leaf: params.min_samples_leaf,
                feature,
                cum: Stats::default(),
                prev: None,
                best: &mut best,
            };
            match (&data.columns, data.x) {
                (Some(cols), _) => {
                    let mut entries: Vec<(f64, Stats)> = Vec::new();
                    let mut nonzero = Stats::default();
                    for &(r, v) in &cols[feature] {
                        let r = r as usize;
                        if node_of[r] != idx as u32 {
                            continue;
                        }
                        let s = target.stats(r, weights[r]);
                        nonzero.add(&s);
                        entries.push((v, s));
                    }
                    if !entries.is_empty() {
                        // Implicit zeros form one block between negative and positive entries.
                        let zero = (entries.len() < rows.len()).then(|| scan.total.minus(&nonzero));
                        let split_at = entries.partition_point(|e| e.0 < 0.0);
                        for (v, s) in &entries[..split_at] {
                            scan.push(*v, s);
                        }
                        if let Some(z) = zero {
                            scan.push(0.0, &z);
                        }
                        for (v, s) in &entries[split_at..] {
                            scan.push(*v, s);
                        }
                    }
                }
                (None, FeatureMatrix::Dense { dim, data: values }) => {
                    let mut vals: Vec<(f64, u32)> = rows.iter().map(|&r| (values[r as usize * dim + feature], r)).collect();
                    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    for (v, r) in vals {
                        let s = target.stats(r as usize, weights[r as usize]);
                        scan.push(v, &s);
                    }
                }
                (None, FeatureMatrix::Sparse { .. }) => unreachable!("sparse matrices always have columns"),
            }
            if i + 1 >= max_features && best.is_some() {
                break;
            }
        }
        let Some(split) = best else {
            nodes[idx] = leaf(&rows, &total);
            continue;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| data.x.get(r as usize, split.feature) <= split.threshold);
        if left_rows.is_empty() || right_rows.is_empty() {
            nodes[idx] = leaf(&rows, &total);
            continue;
        }
        importances[split.feature] += split.gain.max(0.0);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes[idx] = TreeNode::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    (Tree { nodes }, importances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(max_features: usize) -> TreeParams {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1.0,
            max_features,
        }
    }

    #[test]
    fn thresholds_are_f32_and_between() {
        for (lo, hi) in [(0.0, 1.0), (0.1, 0.10000001), (1e-9, 2e-9), (-3.5, -3.25)] {
            let t = threshold_between(lo, hi);
            assert!(lo <= t && t < hi, "{lo} {t} {hi}");
        }
        assert_eq!(threshold_between(0.0, 1.0), 0.5);
    }

    #[test]
    fn separable_dense_tree_is_pure() {
        let x = FeatureMatrix::from_dense_rows(2, &[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.2, 0.9], vec![0.9, 0.1]])
            .unwrap();
        let y = [0, 1, 0, 1];
        let data = SplitData::new(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tree, imp) = grow(&data, &Target::Classes(&y), &[1.0; 4], &params(2), &mut rng);
        for (i, &label) in y.iter().enumerate() {
            assert_eq!(tree.predict_row(&x, i), label as f64);
        }
        assert_eq!(tree.depth(), 1);
        assert!(imp.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn sparse_matches_dense_layout() {
        let dense_rows = vec![
            vec![0.0, 0.3, 0.0],
            vec![0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.7],
            vec![0.2, 0.3, 0.0],
            vec![0.0, 0.9, 0.1],
            vec![0.4, 0.0, 0.0],
        ];
        let y = [0, 1, 0, 1, 0, 1];
        let dense = FeatureMatrix::from_dense_rows(3, &dense_rows).unwrap();
        let sparse_rows = dense_rows
            .iter()
            .map(|r| {
                let pairs = r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect();
                SparseVector::from_pairs(3, pairs).unwrap()
            })
            .collect();
        let sparse = FeatureMatrix::sparse(3, sparse_rows).unwrap();
        let grow_on = |x: &FeatureMatrix| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            grow(&SplitData::new(x), &Target::Classes(&y), &[1.0; 6], &params(3), &mut rng).0
        };
        assert_eq!(grow_on(&dense), grow_on(&sparse));
    }

    #[test]
    fn flat_round_trip() {
        let x = FeatureMatrix::from_dense_rows(1, &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tree, _) = grow(&SplitData::new(&x), &Target::Classes(&y), &[1.0; 3], &params(1), &mut rng);
        assert_eq!(Tree::from_flat(&tree.to_flat()).unwrap(), tree);
    }
}
