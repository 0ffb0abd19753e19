//! Class rebalancing: random undersampling to the minority count, fine-tune
//! subset extraction, labeled pair construction, SMOTE oversampling in
//! embedding space, and the stratified train/test split.
//!
//! Every operation is a pure function of its input and a [`Seed`]; identical
//! seeds produce bit-identical output. Sampling operations preserve the
//! relative input order of the items they keep; SMOTE appends its synthetic
//! points after all originals, sorted by class id and generation index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityLabel, LabelCounts, RedactedSample, NUM_LABELS};
use crate::embed::Embedding;

/// Seed for all randomness in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Stage-specific seed: FNV-1a of the stage name XORed into the run seed,
    /// so partial reruns of a stage see the same stream.
    pub fn for_stage(self, stage: &str) -> Seed {
        Seed(self.0 ^ fnv1a_str(stage))
    }
}

fn fnv1a_str(s: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Anything carrying an entity label; lets the sampling operations work on
/// sentences and embedded points alike.
pub trait Labeled {
    fn label(&self) -> EntityLabel;
}

impl Labeled for RedactedSample {
    fn label(&self) -> EntityLabel {
        self.label
    }
}

/// An embedded sample with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub embedding: Embedding,
    pub label: EntityLabel,
    pub origin: PointOrigin,
}

/// Where a point came from: a real sample (by index into the sample list the
/// embeddings were computed from) or SMOTE interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Real { sample: usize },
    Synthetic,
}

impl Labeled for LabeledPoint {
    fn label(&self) -> EntityLabel {
        self.label
    }
}

/// A sentence pair with its fine-tuning similarity target: 0.8 when the
/// labels match, 0.2 when they differ.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetunePair {
    pub sample_a: RedactedSample,
    pub sample_b: RedactedSample,
    pub target: f64,
}

pub const SAME_LABEL_TARGET: f64 = 0.8;
pub const CROSS_LABEL_TARGET: f64 = 0.2;

/// Default neighbour count for SMOTE.
pub const DEFAULT_SMOTE_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum BalanceError {
    #[error("class {0} has no samples")]
    EmptyClass(EntityLabel),
    #[error("class {label} has {have} samples, fewer than the requested {need}")]
    InsufficientClass {
        label: EntityLabel,
        have: usize,
        need: usize,
    },
    #[error("pair construction requires equal even class counts: {0}")]
    UnevenClasses(String),
    #[error("class {label} has {have} point(s); SMOTE needs at least 2")]
    SmallClass { label: EntityLabel, have: usize },
    #[error("class {label} already has {have} points, above the target {target}")]
    TargetBelowCurrent {
        label: EntityLabel,
        have: usize,
        target: usize,
    },
    #[error("train fraction {0} outside [0, 1]")]
    BadFraction(f64),
}

/// Per-label counts of a labeled collection.
pub fn counts_of<T: Labeled>(items: &[T]) -> LabelCounts {
    LabelCounts::tally(items, |item| item.label())
}

fn indices_by_label<T: Labeled>(items: &[T]) -> [Vec<usize>; NUM_LABELS] {
    let mut groups: [Vec<usize>; NUM_LABELS] = Default::default();
    for (i, item) in items.iter().enumerate() {
        groups[item.label().index()].push(i);
    }
    groups
}

/// Choose `m` of `n` indices uniformly without replacement, returned in
/// ascending order so kept items stay in input order.
fn choose_without_replacement(n: usize, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mut chosen = indices[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Randomly reduce every class to the minority-class count.
pub fn undersample<T: Labeled>(items: Vec<T>, seed: Seed) -> Result<Vec<T>, BalanceError> {
    let groups = indices_by_label(&items);
    for label in EntityLabel::ALL {
        if groups[label.index()].is_empty() {
            return Err(BalanceError::EmptyClass(label));
        }
    }
    let min_count = groups.iter().map(Vec::len).min().unwrap();

    let mut rng = seed.rng();
    let mut keep = vec![false; items.len()];
    for group in &groups {
        for pos in choose_without_replacement(group.len(), min_count, &mut rng) {
            keep[group[pos]] = true;
        }
    }
    Ok(retain_marked(items, &keep))
}

/// Extract `per_label` samples per class for fine-tuning; the remainder is
/// the complement. Subset and remainder are disjoint and preserve input
/// order.
pub fn extract_finetune_subset<T: Labeled>(
    items: Vec<T>,
    per_label: usize,
    seed: Seed,
) -> Result<(Vec<T>, Vec<T>), BalanceError> {
    let groups = indices_by_label(&items);
    for label in EntityLabel::ALL {
        let have = groups[label.index()].len();
        if have < per_label {
            return Err(BalanceError::InsufficientClass {
                label,
                have,
                need: per_label,
            });
        }
    }
    let mut rng = seed.rng();
    let mut take = vec![false; items.len()];
    for group in &groups {
        for pos in choose_without_replacement(group.len(), per_label, &mut rng) {
            take[group[pos]] = true;
        }
    }
    let mut subset = Vec::with_capacity(per_label * NUM_LABELS);
    let mut remainder = Vec::with_capacity(items.len() - per_label * NUM_LABELS);
    for (item, chosen) in items.into_iter().zip(&take) {
        if *chosen {
            subset.push(item);
        } else {
            remainder.push(item);
        }
    }
    Ok((subset, remainder))
}

fn retain_marked<T>(items: Vec<T>, keep: &[bool]) -> Vec<T> {
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(item, &k)| k.then_some(item))
        .collect()
}

/// Build fine-tuning pairs from a balanced subset: per label, half the
/// samples' worth of disjoint same-label pairs at target 0.8 (each sample
/// used once), and the same number of cross-label pairs at target 0.2
/// (sampled with replacement).
pub fn build_pairs(
    subset: &[RedactedSample],
    seed: Seed,
) -> Result<Vec<FinetunePair>, BalanceError> {
    let groups = indices_by_label(subset);
    let first = groups[0].len();
    for label in EntityLabel::ALL {
        let len = groups[label.index()].len();
        if len == 0 {
            return Err(BalanceError::EmptyClass(label));
        }
        if len != first || !len.is_multiple_of(2) {
            return Err(BalanceError::UnevenClasses(format!(
                "class {label} has {len} samples, expected an even {first}"
            )));
        }
    }

    let mut rng = seed.rng();
    let pairs_per_label = first / 2;
    let mut pairs = Vec::with_capacity(first * NUM_LABELS);
    for label in EntityLabel::ALL {
        let group = &groups[label.index()];
        let mut shuffled = group.clone();
        shuffled.shuffle(&mut rng);
        for couple in shuffled.chunks_exact(2) {
            pairs.push(FinetunePair {
                sample_a: subset[couple[0]].clone(),
                sample_b: subset[couple[1]].clone(),
                target: SAME_LABEL_TARGET,
            });
        }
        for _ in 0..pairs_per_label {
            let a = group[rng.gen_range(0..group.len())];
            let other_offset = rng.gen_range(1..NUM_LABELS);
            let other = &groups[(label.index() + other_offset) % NUM_LABELS];
            let b = other[rng.gen_range(0..other.len())];
            pairs.push(FinetunePair {
                sample_a: subset[a].clone(),
                sample_b: subset[b].clone(),
                target: CROSS_LABEL_TARGET,
            });
        }
    }
    Ok(pairs)
}

/// Symmetric matrix of squared Euclidean distances, computed from norms and
/// dot products so each pair is visited once.
fn distance_matrix(points: &[&Embedding]) -> Vec<f64> {
    let n = points.len();
    let norms: Vec<f64> = points
        .iter()
        .map(|e| e.values().iter().map(|v| v * v).sum())
        .collect();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = points[i]
                .values()
                .iter()
                .zip(points[j].values())
                .map(|(x, y)| x * y)
                .sum();
            let d = (norms[i] + norms[j] - 2.0 * dot).max(0.0);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

/// Indices of the `k` smallest entries of `row` excluding `exclude`, ties
/// broken by index order.
fn top_k_row(row: &[f64], exclude: usize, k: usize) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, &d) in row.iter().enumerate() {
        if i == exclude {
            continue;
        }
        let pos = best
            .iter()
            .position(|&(bd, bi)| d < bd || (d == bd && i < bi))
            .unwrap_or(best.len());
        if pos < k {
            best.insert(pos, (d, i));
            best.truncate(k);
        }
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// SMOTE: bring every class present in the input up to `target_per_class`
/// points by interpolating between a real point and one of its `k`
/// same-class nearest neighbours. Original points are retained unmodified in
/// input order; synthetic points follow, sorted by class id then generation
/// index.
pub fn smote_oversample(
    points: Vec<LabeledPoint>,
    target_per_class: usize,
    k: usize,
    seed: Seed,
) -> Result<Vec<LabeledPoint>, BalanceError> {
    assert!(k >= 1, "SMOTE needs k >= 1");
    let groups = indices_by_label(&points);
    for label in EntityLabel::ALL {
        let have = groups[label.index()].len();
        if have == 0 {
            continue;
        }
        if have == 1 {
            return Err(BalanceError::SmallClass { label, have });
        }
        if have > target_per_class {
            return Err(BalanceError::TargetBelowCurrent {
                label,
                have,
                target: target_per_class,
            });
        }
    }

    let mut rng = seed.rng();
    let mut synthetic = Vec::new();
    for label in EntityLabel::ALL {
        let group = &groups[label.index()];
        if group.is_empty() {
            continue;
        }
        let class_points: Vec<&Embedding> = group.iter().map(|&i| &points[i].embedding).collect();
        let k_eff = k.min(class_points.len() - 1);
        let n = class_points.len();
        let dist = distance_matrix(&class_points);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| top_k_row(&dist[i * n..(i + 1) * n], i, k_eff))
            .collect();

        let needed = target_per_class - group.len();
        for gen in 0..needed {
            let base = gen % class_points.len();
            let neighbor = neighbors[base][rng.gen_range(0..k_eff)];
            let u: f64 = rng.gen();
            let values = class_points[base]
                .values()
                .iter()
                .zip(class_points[neighbor].values())
                .map(|(x, y)| x + u * (y - x))
                .collect();
            synthetic.push(LabeledPoint {
                embedding: Embedding::new(values),
                label,
                origin: PointOrigin::Synthetic,
            });
        }
    }
    let mut out = points;
    out.extend(synthetic);
    Ok(out)
}

/// Round-half-up of `fraction * n`.
fn round_half_up(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Stratified split: per class, `round(train_fraction * n)` items go to the
/// train side; both sides preserve input order and partition the input.
pub fn split_train_test<T: Labeled>(
    items: Vec<T>,
    train_fraction: f64,
    seed: Seed,
) -> Result<(Vec<T>, Vec<T>), BalanceError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(BalanceError::BadFraction(train_fraction));
    }
    let groups = indices_by_label(&items);
    let mut rng = seed.rng();
    let mut to_train = vec![false; items.len()];
    for group in &groups {
        let n_train = round_half_up(train_fraction, group.len());
        for pos in choose_without_replacement(group.len(), n_train, &mut rng) {
            to_train[group[pos]] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (item, &is_train) in items.into_iter().zip(&to_train) {
        if is_train {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}
