//! End-to-end pipeline: ingest documents into redacted samples, rebalance,
//! optionally fine-tune the embedding projection on extracted pairs, embed,
//! oversample, split, train a classifier, and evaluate — including the
//! character-evasion evaluation of a trained model.
//!
//! All stage randomness derives from the single run seed via
//! [`Seed::for_stage`], so identical configurations reproduce identical
//! artifacts byte for byte.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::balance::{
    build_pairs, counts_of, extract_finetune_subset, smote_oversample, split_train_test,
    undersample, BalanceError, FinetunePair, LabeledPoint, PointOrigin, Seed, DEFAULT_SMOTE_K,
};
use crate::classify::{
    evaluate, train, ClassifierModel, ClassifyError, MetricsReport, ModelKind, RfParams,
    TrainConfig,
};
use crate::corpus::{AnnotatedDocument, EntityLabel, LabelCounts, RedactedSample};
use crate::embed::{
    embed_base, train_projection, EmbedError, Embedding, PairVectors, Projection, EMBED_DIM,
};
use crate::evade::{evaluate_evasion, fold, harden, EvadeError, HomoglyphMap};
use crate::preprocess::{process_document, StraddlingAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Evade(#[from] EvadeError),
    #[error("no embedding imported for sample {0:?}")]
    MissingEmbedding(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Evaluation mode: `Baseline` embeds with the raw embedder and skips the
/// fine-tune extraction (oversampling then starts from the larger pool);
/// `Finetuned` extracts pairs, trains the projection, and embeds with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Finetuned,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Finetuned => "finetuned",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "finetuned" | "fine-tuned" => Ok(Mode::Finetuned),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Optional overrides of the per-model training defaults.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
}

impl TrainOverrides {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if let Some(batch) = self.batch {
            cfg.batch = batch;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        cfg
    }
}

/// Pipeline configuration. Balancing defaults (fine-tune subset 250 per
/// class, oversampling target 3500) suit a corpus whose minority class holds
/// around 2 800 samples; small-corpus runs override them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub seed: Seed,
    #[serde(default = "default_finetune_per_label")]
    pub finetune_per_label: usize,
    #[serde(default = "default_smote_target")]
    pub smote_target: usize,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
    #[serde(default = "default_finetune_lr")]
    pub finetune_lr: f64,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub rf: RfParams,
    /// Run the hyper-parameter grid search before forest training.
    #[serde(default)]
    pub rf_grid_search: bool,
}

fn default_finetune_per_label() -> usize {
    250
}
fn default_smote_target() -> usize {
    3500
}
fn default_smote_k() -> usize {
    DEFAULT_SMOTE_K
}
fn default_train_fraction() -> f64 {
    0.85
}
fn default_finetune_epochs() -> usize {
    30
}
fn default_finetune_lr() -> f64 {
    1e-3
}

impl PipelineConfig {
    pub fn new(mode: Mode, seed: Seed) -> PipelineConfig {
        PipelineConfig {
            mode,
            seed,
            finetune_per_label: default_finetune_per_label(),
            smote_target: default_smote_target(),
            smote_k: default_smote_k(),
            train_fraction: default_train_fraction(),
            finetune_epochs: default_finetune_epochs(),
            finetune_lr: default_finetune_lr(),
            train: TrainOverrides::default(),
            rf: RfParams::default(),
            rf_grid_search: false,
        }
    }
}

/// Table-style balancing report: per class, the sample count at each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub classes: Vec<BalanceRow>,
    pub totals: BalanceRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub label: String,
    pub dataset: usize,
    pub undersampling: usize,
    pub fine_tuning: usize,
    pub oversampling: usize,
}

impl BalanceReport {
    fn build(
        dataset: &LabelCounts,
        undersampling: &LabelCounts,
        fine_tuning: &LabelCounts,
        oversampling: &LabelCounts,
    ) -> BalanceReport {
        let classes: Vec<BalanceRow> = EntityLabel::ALL
            .iter()
            .map(|&label| BalanceRow {
                label: label.name().to_string(),
                dataset: dataset.get(label),
                undersampling: undersampling.get(label),
                fine_tuning: fine_tuning.get(label),
                oversampling: oversampling.get(label),
            })
            .collect();
        let totals = BalanceRow {
            label: "Total".to_string(),
            dataset: dataset.total(),
            undersampling: undersampling.total(),
            fine_tuning: fine_tuning.total(),
            oversampling: oversampling.total(),
        };
        BalanceReport { classes, totals }
    }
}

/// Ingestion result: one redacted sample per annotation plus the sample ids
/// used to key external embedding files (`"<doc id>#<ordinal>"`).
#[derive(Debug, Clone)]
pub struct Ingested {
    pub samples: Vec<RedactedSample>,
    pub ids: Vec<String>,
    pub straddling: Vec<StraddlingAnnotation>,
}

/// Normalize, split and materialize every document.
pub fn ingest_documents(docs: &[AnnotatedDocument]) -> Ingested {
    let mut samples = Vec::new();
    let mut ids = Vec::new();
    let mut straddling = Vec::new();
    for doc in docs {
        let (doc_samples, doc_straddling) = process_document(doc);
        for (ordinal, sample) in doc_samples.into_iter().enumerate() {
            ids.push(format!("{}#{ordinal}", doc.id));
            samples.push(sample);
        }
        straddling.extend(doc_straddling);
    }
    Ingested {
        samples,
        ids,
        straddling,
    }
}

/// How base embeddings are produced: the built-in hashing embedder, or
/// vectors imported from an embedding file keyed by sample id.
pub enum Embedder {
    Hashing,
    Imported(HashMap<String, Embedding>),
}

impl Embedder {
    fn embed(&self, sample: &RedactedSample, key: &str) -> Result<Embedding, PipelineError> {
        match self {
            Embedder::Hashing => Ok(embed_base(&sample.redacted_sentence)),
            Embedder::Imported(map) => map
                .get(key)
                .cloned()
                .ok_or_else(|| PipelineError::MissingEmbedding(key.to_string())),
        }
    }
}

/// Evasion figures for a run: accuracy on the real (sentence-backed) test
/// samples undefended, hardened, and hardened-then-folded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvasionOutcome {
    pub real_test_samples: usize,
    pub undefended_accuracy: f64,
    pub evaded_accuracy: f64,
    pub folded_accuracy: f64,
}

/// Everything a run produces.
pub struct PipelineArtifacts {
    pub balance_report: BalanceReport,
    pub reports: Vec<MetricsReport>,
    pub model: ClassifierModel,
    pub projection: Projection,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Real (non-synthetic) test-side samples, available for evasion checks.
    pub test_real_samples: Vec<RedactedSample>,
    pub evasion: Option<EvasionOutcome>,
    pub straddling: Vec<StraddlingAnnotation>,
}

/// Run the full pipeline on parsed documents.
pub fn run_pipeline(
    docs: &[AnnotatedDocument],
    model_kind: ModelKind,
    cfg: &PipelineConfig,
    embedder: &Embedder,
    evasion_map: Option<&HomoglyphMap>,
) -> Result<PipelineArtifacts, PipelineError> {
    let ingested = ingest_documents(docs);
    run_pipeline_on_samples(ingested, model_kind, cfg, embedder, evasion_map)
}

/// Pairs each sample with its embedding-file key while keeping `Labeled`
/// sampling operations applicable.
#[derive(Debug, Clone)]
struct Keyed {
    sample: RedactedSample,
    key: String,
}

impl crate::balance::Labeled for Keyed {
    fn label(&self) -> EntityLabel {
        self.sample.label
    }
}

/// Run the pipeline on pre-ingested samples.
pub fn run_pipeline_on_samples(
    ingested: Ingested,
    model_kind: ModelKind,
    cfg: &PipelineConfig,
    embedder: &Embedder,
    evasion_map: Option<&HomoglyphMap>,
) -> Result<PipelineArtifacts, PipelineError> {
    if evasion_map.is_some() && matches!(embedder, Embedder::Imported(_)) {
        // Hardened text cannot be re-embedded through an imported vector
        // table; the evasion evaluation needs the built-in embedder.
        return Err(PipelineError::Config(
            "evasion evaluation is incompatible with imported embeddings".into(),
        ));
    }
    let seed = cfg.seed;
    let straddling = ingested.straddling;
    let keyed: Vec<Keyed> = ingested
        .samples
        .into_iter()
        .zip(ingested.ids)
        .map(|(sample, key)| Keyed { sample, key })
        .collect();

    let dataset_counts = counts_of(&keyed);
    let undersampled = undersample(keyed, seed.for_stage("undersample"))?;
    let undersampling_counts = counts_of(&undersampled);

    // Fine-tune extraction and projection training, or the identity.
    let (pool, projection) = match cfg.mode {
        Mode::Baseline => (undersampled, Projection::identity(EMBED_DIM)),
        Mode::Finetuned => {
            let (subset, remainder) = extract_finetune_subset(
                undersampled,
                cfg.finetune_per_label,
                seed.for_stage("extract"),
            )?;
            let subset_samples: Vec<RedactedSample> =
                subset.iter().map(|k| k.sample.clone()).collect();
            let pairs = build_pairs(&subset_samples, seed.for_stage("pairs"))?;
            // Rebuild the pair vectors through the active embedder; samples
            // inside one document are keyed by content.
            let key_of: HashMap<(String, String, usize), String> = subset
                .iter()
                .map(|k| {
                    (
                        (
                            k.sample.source_doc.clone(),
                            k.sample.redacted_sentence.clone(),
                            k.sample.span.start,
                        ),
                        k.key.clone(),
                    )
                })
                .collect();
            let vectors = pair_vectors(&pairs, &key_of, embedder)?;
            let outcome = train_projection(
                &vectors,
                EMBED_DIM,
                cfg.finetune_epochs,
                cfg.finetune_lr,
                seed.for_stage("finetune"),
            );
            (remainder, outcome.projection)
        }
    };
    let remainder_counts = counts_of(&pool);

    // Embed the pool and oversample.
    let pool_samples: Vec<RedactedSample> = pool.iter().map(|k| k.sample.clone()).collect();
    let points: Vec<LabeledPoint> = pool
        .iter()
        .enumerate()
        .map(|(i, k)| {
            Ok(LabeledPoint {
                embedding: projection.apply(&embedder.embed(&k.sample, &k.key)?),
                label: k.sample.label,
                origin: PointOrigin::Real { sample: i },
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    let augmented = smote_oversample(
        points,
        cfg.smote_target,
        cfg.smote_k,
        seed.for_stage("smote"),
    )?;
    let oversampling_counts = counts_of(&augmented);
    let balance_report = BalanceReport::build(
        &dataset_counts,
        &undersampling_counts,
        &remainder_counts,
        &oversampling_counts,
    );

    let (train_set, test_set) =
        split_train_test(augmented, cfg.train_fraction, seed.for_stage("split"))?;

    // Train and evaluate. The forest can first grid-search its
    // hyper-parameters with 5-fold cross-validation on a subset of the
    // training data.
    let mut train_cfg = train_config(model_kind, cfg, seed.for_stage("train"))?;
    if model_kind == ModelKind::RandomForest && cfg.rf_grid_search {
        let subset = grid_subset(&train_set, 10_000, seed.for_stage("grid-subset"))?;
        let outcome = crate::classify::grid_search_rf(
            &subset,
            &crate::classify::RfGrid::default(),
            5,
            seed.for_stage("grid"),
        )?;
        train_cfg.rf = outcome.best;
    }
    let outcome = train(&train_set, &train_cfg)?;
    let (train_accuracy, _) = evaluate(&outcome.model, &train_set)?;
    let (test_accuracy, confusion) = evaluate(&outcome.model, &test_set)?;

    let mut reports = vec![MetricsReport {
        model: model_kind.name().to_string(),
        mode: cfg.mode.name().to_string(),
        train_accuracy,
        test_accuracy,
        confusion,
        seed: seed.0,
    }];

    let test_real_samples: Vec<RedactedSample> = test_set
        .iter()
        .filter_map(|p| match p.origin {
            PointOrigin::Real { sample } => Some(pool_samples[sample].clone()),
            PointOrigin::Synthetic => None,
        })
        .collect();

    // Character-evasion evaluation on the sentence-backed test samples.
    let evasion = match evasion_map {
        Some(map) if !test_real_samples.is_empty() => {
            let (undefended_accuracy, _) = evaluate_evasion(
                &outcome.model,
                &projection,
                &test_real_samples,
                &HomoglyphMap::empty(),
            )?;
            let (evaded_accuracy, evaded_cm) =
                evaluate_evasion(&outcome.model, &projection, &test_real_samples, map)?;
            let folded: Vec<RedactedSample> = test_real_samples
                .iter()
                .map(|s| RedactedSample {
                    redacted_sentence: fold(&harden(&s.redacted_sentence, map), map),
                    ..s.clone()
                })
                .collect();
            let (folded_accuracy, _) = evaluate_evasion(
                &outcome.model,
                &projection,
                &folded,
                &HomoglyphMap::empty(),
            )?;
            reports.push(MetricsReport {
                model: model_kind.name().to_string(),
                mode: "evasion".to_string(),
                train_accuracy,
                test_accuracy: evaded_accuracy,
                confusion: evaded_cm,
                seed: seed.0,
            });
            Some(EvasionOutcome {
                real_test_samples: test_real_samples.len(),
                undefended_accuracy,
                evaded_accuracy,
                folded_accuracy,
            })
        }
        _ => None,
    };

    Ok(PipelineArtifacts {
        balance_report,
        reports,
        model: outcome.model,
        projection,
        epoch_losses: outcome.epoch_losses,
        train_accuracy,
        test_accuracy,
        test_real_samples,
        evasion,
        straddling,
    })
}

fn pair_vectors(
    pairs: &[FinetunePair],
    key_of: &HashMap<(String, String, usize), String>,
    embedder: &Embedder,
) -> Result<Vec<PairVectors>, PipelineError> {
    pairs
        .iter()
        .map(|pair| {
            let a = embed_pair_member(&pair.sample_a, key_of, embedder)?;
            let b = embed_pair_member(&pair.sample_b, key_of, embedder)?;
            Ok((a, b, pair.target))
        })
        .collect()
}

fn embed_pair_member(
    sample: &RedactedSample,
    key_of: &HashMap<(String, String, usize), String>,
    embedder: &Embedder,
) -> Result<Vec<f64>, PipelineError> {
    let content_key = (
        sample.source_doc.clone(),
        sample.redacted_sentence.clone(),
        sample.span.start,
    );
    let key = key_of
        .get(&content_key)
        .ok_or_else(|| PipelineError::MissingEmbedding(sample.source_doc.clone()))?;
    Ok(embedder.embed(sample, key)?.values().to_vec())
}

/// A balanced subset of at most `limit` points for the grid search.
fn grid_subset(points: &[LabeledPoint], limit: usize, seed: Seed) -> Result<Vec<LabeledPoint>, PipelineError> {
    if points.len() <= limit {
        return Ok(points.to_vec());
    }
    let per_class = limit / crate::corpus::NUM_LABELS;
    let (subset, _) = extract_finetune_subset(points.to_vec(), per_class, seed)?;
    Ok(subset)
}

fn train_config(
    model_kind: ModelKind,
    cfg: &PipelineConfig,
    seed: Seed,
) -> Result<TrainConfig, PipelineError> {
    let base = match model_kind {
        ModelKind::Dnn => TrainConfig::dnn(seed),
        ModelKind::Cnn => TrainConfig::cnn(seed),
        ModelKind::RandomForest => TrainConfig::random_forest(seed, cfg.rf),
    };
    Ok(cfg.train.apply(base))
}

/// One prediction for an asterisk run found in an attacked document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackPrediction {
    pub sentence: String,
    pub start: usize,
    pub len: usize,
    pub label: EntityLabel,
    pub scores: [f64; 8],
}

/// Predict the entity type under every asterisk run of a redacted document.
/// Runs inside the same sentence share that sentence's context and therefore
/// its scores.
pub fn attack_document(
    text: &str,
    model: &ClassifierModel,
    projection: &Projection,
) -> Result<Vec<AttackPrediction>, PipelineError> {
    let normalized = crate::preprocess::normalize_text(text);
    let sentences = crate::preprocess::split_sentences("attack", &normalized);
    let mut predictions = Vec::new();
    for sentence in &sentences {
        let runs = asterisk_runs(&sentence.text);
        if runs.is_empty() {
            continue;
        }
        let embedding = projection.apply(&embed_base(&sentence.text));
        let (label, scores) = crate::classify::predict(model, &embedding)?;
        for (start, len) in runs {
            predictions.push(AttackPrediction {
                sentence: sentence.text.clone(),
                start,
                len,
                label,
                scores,
            });
        }
    }
    Ok(predictions)
}

/// Maximal runs of `*` as (start, length) in code points.
fn asterisk_runs(text: &str) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (i, c) in text.chars().enumerate() {
        if c == '*' {
            current = match current {
                Some((start, len)) => Some((start, len + 1)),
                None => Some((i, 1)),
            };
        } else if let Some(run) = current.take() {
            runs.push(run);
        }
    }
    if let Some(run) = current {
        runs.push(run);
    }
    runs
}
