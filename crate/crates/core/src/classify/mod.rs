//! Classifiers over sentence embeddings: the dense and convolutional
//! networks, the random forest with its hyper-parameter grid search, and the
//! shared accuracy/confusion evaluation harness.

mod forest;
mod grid;
mod net;

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use forest::{entropy, fit_forest, gini, RandomForestModel, RfParams, SplitCriterion, TreeNode};
pub use grid::{grid_search_rf, stratified_folds, GridSearchOutcome, RfGrid};
pub use net::{build_cnn, build_dnn, cnn_flatten_width, CNN_CONVS, CNN_FC_WIDTHS, DNN_WIDTHS};

use crate::balance::{LabeledPoint, Seed};
use crate::corpus::{EntityLabel, NUM_LABELS};
use crate::embed::{Embedding, EMBED_DIM};
use crate::nnet::{softmax_cross_entropy, softmax_rows, AdamState, Network, NnetError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("embedding dimension {got} does not match required {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("architecture shape check failed: expected width {expected}, computed {got}")]
    ShapeCheck { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("evaluation set is empty")]
    EmptyTestSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{have} samples are fewer than the required {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dnn,
    Cnn,
    #[serde(rename = "rf")]
    RandomForest,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Cnn => "cnn",
            ModelKind::RandomForest => "rf",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(ModelKind::Dnn),
            "cnn" => Ok(ModelKind::Cnn),
            "rf" | "random-forest" | "random_forest" => Ok(ModelKind::RandomForest),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Training configuration. The deep models read epochs/batch/lr; the forest
/// reads `rf`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: Seed,
    pub rf: RfParams,
}

impl TrainConfig {
    /// Dense-model defaults: 200 epochs, batch 100, learning rate 5e-5.
    pub fn dnn(seed: Seed) -> TrainConfig {
        TrainConfig {
            kind: ModelKind::Dnn,
            epochs: 200,
            batch: 100,
            lr: 5e-5,
            seed,
            rf: RfParams::default(),
        }
    }

    /// Convolutional-model defaults: 200 epochs, batch 100, learning rate 1e-4.
    pub fn cnn(seed: Seed) -> TrainConfig {
        TrainConfig {
            kind: ModelKind::Cnn,
            epochs: 200,
            batch: 100,
            lr: 1e-4,
            seed,
            rf: RfParams::default(),
        }
    }

    pub fn random_forest(seed: Seed, rf: RfParams) -> TrainConfig {
        TrainConfig {
            kind: ModelKind::RandomForest,
            epochs: 0,
            batch: 1,
            lr: 0.0,
            seed,
            rf,
        }
    }
}

/// A trained classifier.
#[derive(Debug, Clone)]
pub enum ClassifierModel {
    Dnn(Network),
    Cnn(Network),
    Forest(RandomForestModel),
}

/// Training result: the model plus the recorded per-epoch mean loss (empty
/// for the forest).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub epoch_losses: Vec<f64>,
}

/// Train a classifier on embedded points. Deep models require dimension 768;
/// the run is deterministic given the seed.
pub fn train(train_set: &[LabeledPoint], cfg: &TrainConfig) -> Result<TrainOutcome, ClassifyError> {
    if train_set.is_empty() {
        return Err(ClassifyError::EmptyTrainSet);
    }
    match cfg.kind {
        ModelKind::RandomForest => {
            let model = fit_forest(train_set, &cfg.rf, cfg.seed)?;
            Ok(TrainOutcome {
                model: ClassifierModel::Forest(model),
                epoch_losses: Vec::new(),
            })
        }
        ModelKind::Dnn | ModelKind::Cnn => {
            if cfg.batch == 0 || cfg.lr <= 0.0 {
                return Err(ClassifyError::InvalidConfig(
                    "batch size and learning rate must be positive".into(),
                ));
            }
            for p in train_set {
                if p.embedding.dim() != EMBED_DIM {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: EMBED_DIM,
                        got: p.embedding.dim(),
                    });
                }
            }
            let mut network = match cfg.kind {
                ModelKind::Dnn => build_dnn(cfg.seed),
                ModelKind::Cnn => build_cnn(cfg.seed)?,
                ModelKind::RandomForest => unreachable!(),
            };
            let losses = train_network(&mut network, train_set, cfg)?;
            let model = match cfg.kind {
                ModelKind::Dnn => ClassifierModel::Dnn(network),
                ModelKind::Cnn => ClassifierModel::Cnn(network),
                ModelKind::RandomForest => unreachable!(),
            };
            Ok(TrainOutcome {
                model,
                epoch_losses: losses,
            })
        }
    }
}

/// Mini-batch Adam training; batches are reshuffled every epoch and the last
/// partial batch is kept.
fn train_network(
    network: &mut Network,
    train_set: &[LabeledPoint],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, ClassifyError> {
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = cfg.seed.for_stage("batches").rng();
    let mut optimizer = AdamState::new();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut x = Tensor::zeros(&[chunk.len(), EMBED_DIM]);
            let mut labels = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                x.data_mut()[row * EMBED_DIM..(row + 1) * EMBED_DIM]
                    .copy_from_slice(train_set[i].embedding.values());
                labels.push(train_set[i].label.index());
            }
            let logits = network.forward(&x)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels);
            network.backward(&dlogits);
            optimizer.step(network, cfg.lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        losses.push(epoch_loss / n as f64);
    }
    Ok(losses)
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierModel::Dnn(_) => ModelKind::Dnn,
            ClassifierModel::Cnn(_) => ModelKind::Cnn,
            ClassifierModel::Forest(_) => ModelKind::RandomForest,
        }
    }

    /// Class scores for one embedding: softmax probabilities for the deep
    /// models, tree-vote fractions for the forest.
    pub fn scores(&self, embedding: &Embedding) -> Result<[f64; NUM_LABELS], ClassifyError> {
        match self {
            ClassifierModel::Dnn(net) | ClassifierModel::Cnn(net) => {
                if embedding.dim() != EMBED_DIM {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: EMBED_DIM,
                        got: embedding.dim(),
                    });
                }
                let x = Tensor::from_vec(&[1, EMBED_DIM], embedding.values().to_vec());
                let logits = net.infer(&x)?;
                let probs = softmax_rows(&logits);
                let mut scores = [0.0; NUM_LABELS];
                scores.copy_from_slice(probs.data());
                Ok(scores)
            }
            ClassifierModel::Forest(rf) => rf.predict_scores(embedding),
        }
    }

    /// Serialize: deep models as `RBNN1` binaries, forests as JSON.
    pub fn save(&self, w: &mut impl Write) -> Result<(), ClassifyError> {
        match self {
            ClassifierModel::Dnn(net) | ClassifierModel::Cnn(net) => {
                crate::nnet::save_network(net, w)?;
            }
            ClassifierModel::Forest(rf) => {
                serde_json::to_writer(w, rf)
                    .map_err(|e| ClassifyError::BadModelFile(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn save_to_vec(&self) -> Result<Vec<u8>, ClassifyError> {
        let mut bytes = Vec::new();
        self.save(&mut bytes)?;
        Ok(bytes)
    }

    pub fn load(r: &mut impl Read) -> Result<ClassifierModel, ClassifyError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.starts_with(crate::nnet::NETWORK_MAGIC) {
            let network = crate::nnet::load_network(&mut bytes.as_slice())?;
            let is_cnn = network
                .layers
                .iter()
                .any(|l| matches!(l, crate::nnet::Layer::Conv1d(_)));
            Ok(if is_cnn {
                ClassifierModel::Cnn(network)
            } else {
                ClassifierModel::Dnn(network)
            })
        } else {
            let forest: RandomForestModel = serde_json::from_slice(&bytes)
                .map_err(|e| ClassifyError::BadModelFile(e.to_string()))?;
            Ok(ClassifierModel::Forest(forest))
        }
    }
}

/// Predicted label (argmax of the scores, ties to the lowest class index)
/// plus the full score vector.
pub fn predict(
    model: &ClassifierModel,
    embedding: &Embedding,
) -> Result<(EntityLabel, [f64; NUM_LABELS]), ClassifyError> {
    let scores = model.scores(embedding)?;
    let label = EntityLabel::from_index(forest::argmax(&scores)).expect("argmax in range");
    Ok((label, scores))
}

/// 8x8 confusion counts: rows are true labels, columns predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_LABELS]; NUM_LABELS]);

impl ConfusionMatrix {
    pub fn record(&mut self, truth: EntityLabel, predicted: EntityLabel) {
        self.0[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_LABELS).map(|i| self.0[i][i]).sum()
    }

    /// `trace / total`.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }
}

/// Evaluate a model on labeled points: overall accuracy plus the confusion
/// matrix. Deep models run in batches.
pub fn evaluate(
    model: &ClassifierModel,
    test_set: &[LabeledPoint],
) -> Result<(f64, ConfusionMatrix), ClassifyError> {
    if test_set.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let mut cm = ConfusionMatrix::default();
    match model {
        ClassifierModel::Dnn(net) | ClassifierModel::Cnn(net) => {
            for chunk in test_set.chunks(256) {
                let mut x = Tensor::zeros(&[chunk.len(), EMBED_DIM]);
                for (row, p) in chunk.iter().enumerate() {
                    if p.embedding.dim() != EMBED_DIM {
                        return Err(ClassifyError::DimensionMismatch {
                            expected: EMBED_DIM,
                            got: p.embedding.dim(),
                        });
                    }
                    x.data_mut()[row * EMBED_DIM..(row + 1) * EMBED_DIM]
                        .copy_from_slice(p.embedding.values());
                }
                let logits = net.infer(&x)?;
                for (row, p) in chunk.iter().enumerate() {
                    let scores = &logits.data()[row * NUM_LABELS..(row + 1) * NUM_LABELS];
                    let predicted =
                        EntityLabel::from_index(forest::argmax(scores)).expect("argmax in range");
                    cm.record(p.label, predicted);
                }
            }
        }
        ClassifierModel::Forest(_) => {
            for p in test_set {
                let (predicted, _) = predict(model, &p.embedding)?;
                cm.record(p.label, predicted);
            }
        }
    }
    Ok((cm.accuracy(), cm))
}

/// Fold-evaluation helper for the grid search (borrowed points, forest only).
pub(crate) fn evaluate_forest_fold(
    model: &RandomForestModel,
    fold: &[&LabeledPoint],
) -> Result<f64, ClassifyError> {
    let mut correct = 0usize;
    for p in fold {
        let scores = model.predict_scores(&p.embedding)?;
        if forest::argmax(&scores) == p.label.index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / fold.len() as f64)
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub mode: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::PointOrigin;
    use rand::Rng;

    /// Eight separable Gaussian blobs in the full embedding dimension.
    fn blobs(per_class: usize, noise: f64, seed: Seed) -> Vec<LabeledPoint> {
        let mut rng = seed.rng();
        let centers: Vec<Vec<f64>> = (0..NUM_LABELS)
            .map(|_| (0..EMBED_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut points = Vec::new();
        for label in EntityLabel::ALL {
            for s in 0..per_class {
                let values = centers[label.index()]
                    .iter()
                    .map(|c| c + rng.gen_range(-noise..noise))
                    .collect();
                points.push(LabeledPoint {
                    embedding: Embedding::new(values),
                    label,
                    origin: PointOrigin::Real { sample: s },
                });
            }
        }
        points
    }

    #[test]
    fn zero_epochs_yield_the_initial_model() {
        let points = blobs(2, 0.1, Seed(1));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::dnn(Seed(2))
        };
        let outcome = train(&points, &cfg).unwrap();
        assert!(outcome.epoch_losses.is_empty());
        // Weights equal a freshly built network with the same seed.
        let fresh = build_dnn(Seed(2));
        match outcome.model {
            ClassifierModel::Dnn(mut net) => {
                let mut expected = fresh;
                let trained: Vec<f64> = net
                    .param_grad_pairs()
                    .iter()
                    .flat_map(|(p, _)| p.data().to_vec())
                    .collect();
                let initial: Vec<f64> = expected
                    .param_grad_pairs()
                    .iter()
                    .flat_map(|(p, _)| p.data().to_vec())
                    .collect();
                assert_eq!(trained, initial);
            }
            _ => panic!("expected a dense model"),
        }
    }

    #[test]
    fn dnn_separates_blob_classes() {
        let points = blobs(10, 0.15, Seed(3));
        let cfg = TrainConfig {
            epochs: 50,
            batch: 40,
            lr: 1e-3,
            ..TrainConfig::dnn(Seed(4))
        };
        let outcome = train(&points, &cfg).unwrap();
        let (train_acc, _) = evaluate(&outcome.model, &points).unwrap();
        assert!(train_acc >= 0.95, "train accuracy {train_acc}");

        // Smoothed (10-epoch window) loss is non-increasing.
        let losses = &outcome.epoch_losses;
        let window = 10;
        let means: Vec<f64> = losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect();
        for pair in means.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6, "smoothed loss rose: {pair:?}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let points = blobs(3, 0.1, Seed(5));
        let cfg = TrainConfig {
            epochs: 2,
            batch: 8,
            lr: 1e-3,
            ..TrainConfig::dnn(Seed(6))
        };
        let a = train(&points, &cfg).unwrap().model.save_to_vec().unwrap();
        let b = train(&points, &cfg).unwrap().model.save_to_vec().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deep_scores_form_a_probability_simplex() {
        let points = blobs(2, 0.1, Seed(7));
        let cfg = TrainConfig {
            epochs: 1,
            batch: 8,
            lr: 1e-3,
            ..TrainConfig::dnn(Seed(8))
        };
        let outcome = train(&points, &cfg).unwrap();
        let (label, scores) = predict(&outcome.model, &points[0].embedding).unwrap();
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(scores.iter().all(|&s| s >= 0.0));
        // Argmax consistency.
        assert_eq!(label.index(), forest::argmax(&scores));
    }

    #[test]
    fn argmax_is_invariant_under_positive_scaling() {
        let scores = [0.1, 0.7, 0.05, 0.05, 0.02, 0.03, 0.03, 0.02];
        let scaled: Vec<f64> = scores.iter().map(|s| s * 42.0).collect();
        assert_eq!(forest::argmax(&scores), forest::argmax(&scaled));
        let label_scores = [3.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // Ties go to the lowest class index.
        assert_eq!(forest::argmax(&label_scores), 0);
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let mut cm = ConfusionMatrix::default();
        for _ in 0..8 {
            cm.record(EntityLabel::Person, EntityLabel::Person);
        }
        cm.record(EntityLabel::Person, EntityLabel::Loc);
        cm.record(EntityLabel::Org, EntityLabel::Code);
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.trace(), 8);
        assert!((cm.accuracy() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn confusion_accuracy_equals_direct_counting() {
        let mut rng = Seed(9).rng();
        let mut cm = ConfusionMatrix::default();
        let mut correct = 0usize;
        let n = 1000;
        for _ in 0..n {
            let truth = EntityLabel::from_index(rng.gen_range(0..NUM_LABELS)).unwrap();
            let pred = EntityLabel::from_index(rng.gen_range(0..NUM_LABELS)).unwrap();
            cm.record(truth, pred);
            if truth == pred {
                correct += 1;
            }
        }
        assert_eq!(cm.accuracy(), correct as f64 / n as f64);
    }

    #[test]
    fn random_guessing_sits_near_chance() {
        let mut rng = Seed(10).rng();
        let mut cm = ConfusionMatrix::default();
        for i in 0..2400usize {
            let truth = EntityLabel::from_index(i % NUM_LABELS).unwrap();
            let pred = EntityLabel::from_index(rng.gen_range(0..NUM_LABELS)).unwrap();
            cm.record(truth, pred);
        }
        assert!((cm.accuracy() - 0.125).abs() <= 0.03, "{}", cm.accuracy());
    }

    #[test]
    fn all_correct_predictions_give_a_diagonal_matrix() {
        let points = blobs(4, 0.05, Seed(11));
        let cfg = TrainConfig {
            epochs: 40,
            batch: 32,
            lr: 2e-3,
            ..TrainConfig::dnn(Seed(12))
        };
        let outcome = train(&points, &cfg).unwrap();
        let (acc, cm) = evaluate(&outcome.model, &points).unwrap();
        assert_eq!(acc, 1.0);
        for (i, row) in cm.0.iter().enumerate() {
            for (j, &cell) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(cell, 0);
                }
            }
        }
    }

    #[test]
    fn forest_model_round_trips_through_its_file_form() {
        let points = blobs(3, 0.1, Seed(13));
        let cfg = TrainConfig::random_forest(
            Seed(14),
            RfParams {
                n_estimators: 5,
                ..RfParams::default()
            },
        );
        let outcome = train(&points, &cfg).unwrap();
        let bytes = outcome.model.save_to_vec().unwrap();
        let loaded = ClassifierModel::load(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.kind(), ModelKind::RandomForest);
        let (a, _) = predict(&outcome.model, &points[0].embedding).unwrap();
        let (b, _) = predict(&loaded, &points[0].embedding).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deep_model_kind_survives_reload() {
        let points = blobs(2, 0.1, Seed(15));
        let cfg = TrainConfig {
            epochs: 1,
            batch: 16,
            lr: 1e-3,
            ..TrainConfig::cnn(Seed(16))
        };
        let outcome = train(&points, &cfg).unwrap();
        let bytes = outcome.model.save_to_vec().unwrap();
        let loaded = ClassifierModel::load(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.kind(), ModelKind::Cnn);
    }

    #[test]
    fn wrong_dimension_embeddings_are_rejected() {
        let points = vec![LabeledPoint {
            embedding: Embedding::new(vec![0.0; 200]),
            label: EntityLabel::Org,
            origin: PointOrigin::Real { sample: 0 },
        }];
        assert!(matches!(
            train(&points, &TrainConfig::dnn(Seed(0))),
            Err(ClassifyError::DimensionMismatch { got: 200, .. })
        ));
    }

    #[test]
    fn metrics_report_serializes_with_the_agreed_fields() {
        let report = MetricsReport {
            model: "dnn".into(),
            mode: "baseline".into(),
            train_accuracy: 0.9,
            test_accuracy: 0.8,
            confusion: ConfusionMatrix::default(),
            seed: 7,
        };
        let json = serde_json::to_string(&report).unwrap();
        for key in ["\"model\"", "\"mode\"", "\"train_accuracy\"", "\"test_accuracy\"", "\"confusion\"", "\"seed\""] {
            assert!(json.contains(key), "missing {key}");
        }
    }
}
