//! Stratified k-fold cross-validation and the forest hyper-parameter grid
//! search.

use super::forest::{fit_forest, RfParams, SplitCriterion};
use super::{evaluate_forest_fold, ClassifyError};
use crate::balance::{Labeled, LabeledPoint, Seed};
use crate::corpus::NUM_LABELS;

/// The hyper-parameter grid.
#[derive(Debug, Clone)]
pub struct RfGrid {
    pub n_estimators: Vec<usize>,
    pub criteria: Vec<SplitCriterion>,
    pub max_depths: Vec<Option<usize>>,
}

impl Default for RfGrid {
    fn default() -> Self {
        RfGrid {
            n_estimators: vec![150, 200, 300],
            criteria: vec![
                SplitCriterion::Gini,
                SplitCriterion::Entropy,
                SplitCriterion::LogLoss,
            ],
            max_depths: vec![Some(3), Some(5), None],
        }
    }
}

impl RfGrid {
    /// All configurations in grid order.
    pub fn configurations(&self) -> Vec<RfParams> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &criterion in &self.criteria {
                for &max_depth in &self.max_depths {
                    out.push(RfParams {
                        n_estimators: n,
                        criterion,
                        max_depth,
                    });
                }
            }
        }
        out
    }
}

/// Assign each item to one of `folds` folds, stratified per class:
/// class indices are shuffled and dealt round-robin.
pub fn stratified_folds<T: Labeled>(items: &[T], folds: usize, seed: Seed) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut assignment = vec![0usize; items.len()];
    let mut rng = seed.rng();
    for class in 0..NUM_LABELS {
        let mut indices: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(_, item)| item.label().index() == class)
            .map(|(i, _)| i)
            .collect();
        indices.shuffle(&mut rng);
        for (pos, i) in indices.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    assignment
}

/// Grid search outcome: the winning configuration plus every evaluated
/// configuration with its mean fold accuracy, in grid order.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: RfParams,
    pub best_accuracy: f64,
    pub evaluated: Vec<(RfParams, f64)>,
}

/// Exhaustive grid search with stratified k-fold cross-validation.
///
/// Accuracy ties prefer fewer trees, then shallower depth, then
/// gini < entropy < log-loss. Each grid point trains with seed
/// `seed XOR point_index`.
pub fn grid_search_rf(
    points: &[LabeledPoint],
    grid: &RfGrid,
    folds: usize,
    seed: Seed,
) -> Result<GridSearchOutcome, ClassifyError> {
    if folds < 2 {
        return Err(ClassifyError::InvalidConfig("need at least 2 folds".into()));
    }
    if points.len() < folds {
        return Err(ClassifyError::TooFewSamples {
            have: points.len(),
            need: folds,
        });
    }
    let configurations = grid.configurations();
    if configurations.is_empty() {
        return Err(ClassifyError::InvalidConfig("empty grid".into()));
    }
    let assignment = stratified_folds(points, folds, seed.for_stage("folds"));

    let mut evaluated = Vec::with_capacity(configurations.len());
    for (point_index, params) in configurations.into_iter().enumerate() {
        let point_seed = Seed(seed.0 ^ point_index as u64);
        let mut accuracy_sum = 0.0;
        for fold in 0..folds {
            let train: Vec<LabeledPoint> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a != fold)
                .map(|(p, _)| p.clone())
                .collect();
            let test: Vec<&LabeledPoint> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == fold)
                .map(|(p, _)| p)
                .collect();
            let model = fit_forest(&train, &params, point_seed.for_stage(&format!("fold-{fold}")))?;
            accuracy_sum += evaluate_forest_fold(&model, &test)?;
        }
        evaluated.push((params, accuracy_sum / folds as f64));
    }

    let mut best = evaluated[0];
    for &(params, accuracy) in &evaluated[1..] {
        if accuracy > best.1 || (accuracy == best.1 && tie_key(&params) < tie_key(&best.0)) {
            best = (params, accuracy);
        }
    }
    Ok(GridSearchOutcome {
        best: best.0,
        best_accuracy: best.1,
        evaluated,
    })
}

fn tie_key(params: &RfParams) -> (usize, usize, usize) {
    (
        params.n_estimators,
        params.max_depth.unwrap_or(usize::MAX),
        params.criterion as usize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::PointOrigin;
    use crate::corpus::EntityLabel;
    use crate::embed::Embedding;
    use rand::Rng;

    fn separable_points(per_class: usize) -> Vec<LabeledPoint> {
        let mut rng = Seed(21).rng();
        let mut points = Vec::new();
        for label in EntityLabel::ALL {
            for s in 0..per_class {
                points.push(LabeledPoint {
                    embedding: Embedding::new(vec![
                        label.index() as f64 * 10.0 + rng.gen_range(0.0..1.0),
                    ]),
                    label,
                    origin: PointOrigin::Real { sample: s },
                });
            }
        }
        points
    }

    #[test]
    fn default_grid_has_27_configurations() {
        assert_eq!(RfGrid::default().configurations().len(), 27);
    }

    #[test]
    fn single_configuration_grid_returns_it() {
        let grid = RfGrid {
            n_estimators: vec![7],
            criteria: vec![SplitCriterion::Entropy],
            max_depths: vec![Some(4)],
        };
        let outcome = grid_search_rf(&separable_points(5), &grid, 5, Seed(1)).unwrap();
        assert_eq!(
            outcome.best,
            RfParams {
                n_estimators: 7,
                criterion: SplitCriterion::Entropy,
                max_depth: Some(4),
            }
        );
        assert_eq!(outcome.evaluated.len(), 1);
    }

    #[test]
    fn folds_partition_every_sample_once_stratified() {
        let points = separable_points(10);
        let folds = 5;
        let assignment = stratified_folds(&points, folds, Seed(2));
        assert_eq!(assignment.len(), points.len());
        // Every fold holds exactly 2 of each class's 10 samples.
        for fold in 0..folds {
            for label in EntityLabel::ALL {
                let count = points
                    .iter()
                    .zip(&assignment)
                    .filter(|(p, &a)| a == fold && p.label == label)
                    .count();
                assert_eq!(count, 2, "fold {fold}, class {label}");
            }
        }
    }

    #[test]
    fn unlimited_depth_never_wins_when_depth_three_suffices() {
        // One feature, eight separated clusters: depth 3 classifies
        // perfectly, so the tie-break must select the smallest
        // configuration.
        let points = separable_points(8);
        let outcome = grid_search_rf(&points, &RfGrid::default(), 5, Seed(3)).unwrap();
        assert_eq!(outcome.best.max_depth, Some(3));
        assert_eq!(outcome.best.n_estimators, 150);
        assert_eq!(outcome.best.criterion, SplitCriterion::Gini);
        assert_eq!(outcome.best_accuracy, 1.0);
    }

    #[test]
    fn too_small_subsets_are_rejected() {
        let points = separable_points(8);
        assert!(matches!(
            grid_search_rf(&points[..3], &RfGrid::default(), 5, Seed(0)),
            Err(ClassifyError::TooFewSamples { have: 3, need: 5 })
        ));
    }
}
