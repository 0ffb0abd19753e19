//! Random forest: bagged decision trees with exact threshold scans over a
//! √D feature subsample per split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::balance::{LabeledPoint, Seed};
use crate::corpus::NUM_LABELS;
use crate::embed::Embedding;

/// Split quality measure. Log-loss shares the entropy formula; it is kept as
/// a distinct variant because the hyper-parameter grid treats it as one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    Entropy,
    LogLoss,
}

impl std::fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SplitCriterion::Gini => "gini",
            SplitCriterion::Entropy => "entropy",
            SplitCriterion::LogLoss => "log_loss",
        };
        f.write_str(name)
    }
}

/// Forest hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_estimators: usize,
    pub criterion: SplitCriterion,
    /// `None` grows trees until purity.
    pub max_depth: Option<usize>,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_estimators: 200,
            criterion: SplitCriterion::Gini,
            max_depth: None,
        }
    }
}

/// Gini impurity `1 - Σ pᵢ²` of a class histogram.
pub fn gini(counts: &[usize; NUM_LABELS], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Shannon entropy `-Σ pᵢ ln pᵢ` (natural log) of a class histogram.
pub fn entropy(counts: &[usize; NUM_LABELS], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.ln();
        }
    }
    h
}

fn impurity(criterion: SplitCriterion, counts: &[usize; NUM_LABELS], total: usize) -> f64 {
    match criterion {
        SplitCriterion::Gini => gini(counts, total),
        SplitCriterion::Entropy | SplitCriterion::LogLoss => entropy(counts, total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Class distribution of the training samples in this leaf.
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Leaf distribution for one feature vector: `<= threshold` goes left.
    pub fn distribution<'a>(&'a self, features: &[f64]) -> &'a [f64] {
        match self {
            TreeNode::Leaf { dist } => dist,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if features[*feature] <= *threshold {
                    left.distribution(features)
                } else {
                    right.distribution(features)
                }
            }
        }
    }

    /// The tree's vote: argmax of the leaf distribution, ties to the lowest
    /// class index.
    pub fn vote(&self, features: &[f64]) -> usize {
        argmax(self.distribution(features))
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub params: RfParams,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl RandomForestModel {
    /// Fraction of trees voting for each class.
    pub fn predict_scores(&self, embedding: &Embedding) -> Result<[f64; NUM_LABELS], ClassifyError> {
        if embedding.dim() != self.n_features {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.n_features,
                got: embedding.dim(),
            });
        }
        let mut votes = [0usize; NUM_LABELS];
        for tree in &self.trees {
            votes[tree.vote(embedding.values())] += 1;
        }
        let mut scores = [0.0; NUM_LABELS];
        for (s, &v) in scores.iter_mut().zip(&votes) {
            *s = v as f64 / self.trees.len() as f64;
        }
        Ok(scores)
    }
}

/// Fit a forest: each tree trains on a bootstrap sample and considers
/// `max(1, ⌊√D⌋)` freshly sampled features at every split.
pub fn fit_forest(
    points: &[LabeledPoint],
    params: &RfParams,
    seed: Seed,
) -> Result<RandomForestModel, ClassifyError> {
    if points.is_empty() {
        return Err(ClassifyError::EmptyTrainSet);
    }
    if params.n_estimators == 0 {
        return Err(ClassifyError::InvalidConfig("n_estimators must be positive".into()));
    }
    let n_features = points[0].embedding.dim();
    for p in points {
        if p.embedding.dim() != n_features {
            return Err(ClassifyError::DimensionMismatch {
                expected: n_features,
                got: p.embedding.dim(),
            });
        }
    }
    let features: Vec<&[f64]> = points.iter().map(|p| p.embedding.values()).collect();
    let labels: Vec<usize> = points.iter().map(|p| p.label.index()).collect();
    let m_features = (n_features as f64).sqrt().floor().max(1.0) as usize;

    let trees = (0..params.n_estimators)
        .map(|i| {
            let tree_seed = seed.0 ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let indices: Vec<usize> = (0..points.len())
                .map(|_| rng.gen_range(0..points.len()))
                .collect();
            build_tree(&features, &labels, &indices, 0, params, m_features, &mut rng)
        })
        .collect();

    Ok(RandomForestModel {
        params: *params,
        n_features,
        trees,
    })
}

fn histogram(labels: &[usize], indices: &[usize]) -> ([usize; NUM_LABELS], usize) {
    let mut counts = [0usize; NUM_LABELS];
    for &i in indices {
        counts[labels[i]] += 1;
    }
    (counts, indices.len())
}

fn leaf(counts: &[usize; NUM_LABELS], total: usize) -> TreeNode {
    TreeNode::Leaf {
        dist: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    }
}

fn build_tree(
    features: &[&[f64]],
    labels: &[usize],
    indices: &[usize],
    depth: usize,
    params: &RfParams,
    m_features: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let (counts, total) = histogram(labels, indices);
    let node_impurity = impurity(params.criterion, &counts, total);
    let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
    if total < 2 || node_impurity == 0.0 || depth_reached {
        return leaf(&counts, total);
    }

    let n_features = features[0].len();
    let candidates = sample_features(n_features, m_features, rng);

    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(total);
    for &feature in &candidates {
        sorted.clear();
        sorted.extend(indices.iter().map(|&i| (features[i][feature], labels[i])));
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let mut left_counts = [0usize; NUM_LABELS];
        for (pos, &(value, class)) in sorted.iter().enumerate().take(total - 1) {
            left_counts[class] += 1;
            if value == sorted[pos + 1].0 {
                continue;
            }
            let n_left = pos + 1;
            let n_right = total - n_left;
            let mut right_counts = [0usize; NUM_LABELS];
            for c in 0..NUM_LABELS {
                right_counts[c] = counts[c] - left_counts[c];
            }
            let weighted = (n_left as f64 * impurity(params.criterion, &left_counts, n_left)
                + n_right as f64 * impurity(params.criterion, &right_counts, n_right))
                / total as f64;
            let gain = node_impurity - weighted;
            if best.is_none_or(|(bg, _, _)| gain > bg) {
                let threshold = value + (sorted[pos + 1].0 - value) / 2.0;
                best = Some((gain, feature, threshold));
            }
        }
    }

    let Some((gain, feature, threshold)) = best else {
        return leaf(&counts, total);
    };
    if gain <= 1e-12 {
        return leaf(&counts, total);
    }

    let mut left_idx = Vec::new();
    let mut right_idx = Vec::new();
    for &i in indices.iter() {
        if features[i][feature] <= threshold {
            left_idx.push(i);
        } else {
            right_idx.push(i);
        }
    }
    let left = build_tree(features, labels, &left_idx, depth + 1, params, m_features, rng);
    let right = build_tree(features, labels, &right_idx, depth + 1, params, m_features, rng);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Sample `m` distinct feature indices; the scan order is the selection
/// order so ties resolve deterministically.
fn sample_features(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = m.min(n);
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.gen_range(i..n);
        all.swap(i, j);
    }
    all.truncate(m);
    all
}
