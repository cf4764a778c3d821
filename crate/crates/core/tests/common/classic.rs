//! Independent oracles for the conventional classifiers.

use infodemic::classic::{
    bootstrap_counts, BoostingParams, ForestParams, GradientBoosting, Knn, KnnMetric, MultinomialNb, RandomForest,
    TreeNode,
};
use infodemic::features::{FeatureMatrix, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest gap between the model posterior and Bayes' rule worked out with explicit products,
/// on a four-document corpus with Laplace smoothing.
pub fn nb_posterior_error() -> f64 {
    // Term weights per document over a three-term vocabulary.
    let docs: [[f64; 3]; 4] = [[2.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 0.0, 1.0]];
    let labels = [0usize, 0, 1, 1];
    let queries: [[f64; 3]; 4] = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.5, 0.0, 0.25]];
    let to_rows = |rows: &[[f64; 3]]| {
        let rows = rows
            .iter()
            .map(|r| SparseVector::from_pairs(3, r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect()).unwrap())
            .collect();
        FeatureMatrix::sparse(3, rows).unwrap()
    };
    let nb = MultinomialNb::fit(&to_rows(&docs), &labels, 1.0).unwrap();
    let proba = nb.predict_proba(&to_rows(&queries)).unwrap();

    // Hand computation: theta[c][j] = (count + 1) / (total + 3); posterior via unnormalized products.
    let mut theta = [[0.0; 3]; 2];
    for c in 0..2 {
        let mut counts = [0.0; 3];
        for (d, &l) in docs.iter().zip(&labels) {
            if l == c {
                for j in 0..3 {
                    counts[j] += d[j];
                }
            }
        }
        let total: f64 = counts.iter().sum();
        for j in 0..3 {
            theta[c][j] = (counts[j] + 1.0) / (total + 3.0);
        }
    }
    let mut worst: f64 = 0.0;
    for (q, p) in queries.iter().zip(&proba) {
        let mut joint = [0.5, 0.5];
        for c in 0..2 {
            for j in 0..3 {
                joint[c] *= theta[c][j].powf(q[j]);
            }
        }
        let z = joint[0] + joint[1];
        worst = worst.max((p[0] - joint[0] / z).abs()).max((p[1] - joint[1] / z).abs());
    }
    worst
}

/// Hand-written recursive CART with weighted Gini, exhaustive over all features.
struct HandCart {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    w: Vec<f64>,
}

enum HandNode {
    Leaf(f64),
    Split(usize, f64, Box<HandNode>, Box<HandNode>),
}

impl HandCart {
    fn gini(&self, rows: &[usize]) -> (f64, f64) {
        let w: f64 = rows.iter().map(|&r| self.w[r]).sum();
        let w1: f64 = rows.iter().filter(|&&r| self.y[r] == 1).map(|&r| self.w[r]).sum();
        let p = w1 / w;
        (w, 1.0 - p * p - (1.0 - p) * (1.0 - p))
    }

    fn build(&self, rows: Vec<usize>) -> HandNode {
        let (w, g) = self.gini(&rows);
        let w1: f64 = rows.iter().filter(|&&r| self.y[r] == 1).map(|&r| self.w[r]).sum();
        if g == 0.0 || w < 2.0 {
            return HandNode::Leaf(w1 / w);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..self.x[0].len() {
            let mut values: Vec<f64> = rows.iter().map(|&r| self.x[r][f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let t = (pair[0] + pair[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][f] <= t);
                let ((wl, gl), (wr, gr)) = (self.gini(&l), self.gini(&r));
                let decrease = w * g - wl * gl - wr * gr;
                let better = match best {
                    None => true,
                    Some((d, bf, bt)) => decrease > d + 1e-9 || (decrease > d - 1e-9 && (f, t) < (bf, bt)),
                };
                if better {
                    best = Some((decrease, f, t));
                }
            }
        }
        match best {
            None => HandNode::Leaf(w1 / w),
            Some((_, f, t)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][f] <= t);
                HandNode::Split(f, t, Box::new(self.build(l)), Box::new(self.build(r)))
            }
        }
    }

    fn predict(node: &HandNode, x: &[f64]) -> f64 {
        match node {
            HandNode::Leaf(v) => *v,
            HandNode::Split(f, t, l, r) => Self::predict(if x[*f] <= *t { l } else { r }, x),
        }
    }
}

/// Number of disagreements between a one-tree forest and the hand CART on its bootstrap sample,
/// over the training rows and 200 random probes.
pub fn single_tree_forest_mismatches(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| (rng.random_range(0..40) as f64) / 8.0).collect())
        .collect();
    let y: Vec<usize> = x
        .iter()
        .map(|r| usize::from(r[0] + 0.5 * r[1] + rng.random_range(-0.8..0.8) > 3.5))
        .collect();
    let matrix = FeatureMatrix::from_dense_rows(3, &x).unwrap();
    let params = ForestParams {
        n_trees: 1,
        max_features: Some(3),
        ..ForestParams::default()
    };
    let (forest, _) = RandomForest::fit(&matrix, &y, &params, seed).unwrap();
    let weights = bootstrap_counts(seed, 0, n);
    let cart = HandCart {
        x: x.clone(),
        y: y.clone(),
        w: weights.clone(),
    };
    let root = cart.build((0..n).filter(|&i| weights[i] > 0.0).collect());
    let mut probes = x;
    probes.extend((0..200).map(|_| (0..3).map(|_| rng.random_range(-0.5..5.5)).collect::<Vec<f64>>()));
    let probe_matrix = FeatureMatrix::from_dense_rows(3, &probes).unwrap();
    let labels = forest.predict(&probe_matrix).unwrap().labels;
    probes
        .iter()
        .zip(labels)
        .filter(|(p, label)| usize::from(HandCart::predict(&root, p) > 0.5) != *label)
        .count()
}

/// Checks a single depth-1 boosting stage against an exhaustive search over split points.
pub fn boosting_stump_matches(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    xs.sort_by(f64::total_cmp);
    let cut = rng.random_range(5..25);
    let y: Vec<usize> = (0..n).map(|i| usize::from(i >= cut)).collect();
    let matrix = FeatureMatrix::dense(1, xs.clone()).unwrap();
    let params = BoostingParams {
        n_estimators: 1,
        learning_rate: 0.1,
        max_depth: 1,
    };
    let (gb, _) = GradientBoosting::fit(&matrix, &y, &params, seed).map_err(|e| e.to_string())?;

    // Oracle: residuals from the prior, every gap between sorted values tried, least squared error kept.
    let prior = y.iter().sum::<usize>() as f64 / n as f64;
    let r: Vec<f64> = y.iter().map(|&l| l as f64 - prior).collect();
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (r[i] - m).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0usize);
    for k in 1..n {
        let total = sse(&(0..k).collect::<Vec<_>>()) + sse(&(k..n).collect::<Vec<_>>());
        if total < best.0 - 1e-12 {
            best = (total, k);
        }
    }
    let k = best.1;
    let tree = &gb.trees()[0];
    let TreeNode::Split { threshold, left, right, .. } = tree.nodes[0] else {
        return Err("stage is not a stump".into());
    };
    if !(xs[k - 1] <= threshold && threshold < xs[k]) {
        return Err(format!("threshold {threshold} outside oracle gap [{}, {})", xs[k - 1], xs[k]));
    }
    let h = prior * (1.0 - prior);
    let newton = |idx: std::ops::Range<usize>| idx.clone().map(|i| r[i]).sum::<f64>() / (idx.len() as f64 * h);
    for (node, expected) in [(left, newton(0..k)), (right, newton(k..n))] {
        let TreeNode::Leaf { value } = tree.nodes[node as usize] else {
            return Err("stump child is not a leaf".into());
        };
        if (value - expected).abs() > 1e-6 * expected.abs().max(1.0) {
            return Err(format!("leaf {value} vs newton step {expected}"));
        }
    }
    Ok(())
}

/// Count of rows where the classifier disagrees with a brute-force neighbour search.
pub fn knn_mismatches(seed: u64, metric: KnnMetric) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 4;
    let n = 100;
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect()
    };
    let train: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let queries: Vec<Vec<f64>> = (0..50).map(|_| point(&mut rng)).collect();
    let as_matrix = |rows: &[Vec<f64>]| match metric {
        KnnMetric::Euclidean => FeatureMatrix::from_dense_rows(dim, rows).unwrap(),
        KnnMetric::Cosine => FeatureMatrix::sparse(
            dim,
            rows.iter()
                .map(|r| SparseVector::from_pairs(dim, r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect()).unwrap())
                .collect(),
        )
        .unwrap(),
    };
    let k = 6;
    let knn = Knn::fit(&as_matrix(&train), &y, k, metric).unwrap();
    let got = knn.predict(&as_matrix(&queries)).unwrap().labels;
    let dist = |a: &[f64], b: &[f64]| match metric {
        KnnMetric::Euclidean => a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt(),
        KnnMetric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        }
    };
    queries
        .iter()
        .zip(got)
        .filter(|(q, label)| {
            let mut all: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, t)| (dist(q, t), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let real = all[..k].iter().filter(|(_, i)| y[*i] == 1).count();
            let expected = if 2 * real > k {
                1
            } else if 2 * real < k {
                0
            } else {
                y[all[0].1]
            };
            expected != *label
        })
        .count()
}
