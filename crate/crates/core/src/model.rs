//! Multi-label classifier head: independent per-label sigmoids over one
//! linear map, trained with binary cross-entropy (hard or soft targets) by
//! plain mini-batch SGD with a linearly decaying learning rate.
//!
//! Prediction assigns every label whose probability strictly exceeds its
//! per-category threshold; thresholds can be calibrated against a
//! validation set to hit a precision target with maximal recall.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabelMatrix, LabelMode};
use crate::rng::SeededRng;
use crate::textfeat::{FeatureSource, FeatureVector, TextFeatError, Vocabulary};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training data is empty")]
    EmptyData,
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("unsupported model format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed model payload: {0}")]
    Payload(#[from] serde_json::Error),
    #[error("{0}")]
    Feature(#[from] TextFeatError),
}

/// Probabilities are clamped into `[EPS, 1 - EPS]` inside the loss.
const EPS: f64 = 1e-12;

/// Linear sigmoid head: per-label weight rows and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Vec<f64>,
    biases: Vec<f64>,
    category_ids: Vec<String>,
    feature_dimension: usize,
    feature_source: FeatureSource,
}

impl LinearHead {
    pub fn zeros(
        category_ids: Vec<String>,
        feature_dimension: usize,
        feature_source: FeatureSource,
    ) -> Self {
        let labels = category_ids.len();
        LinearHead {
            weights: vec![0.0; labels * feature_dimension],
            biases: vec![0.0; labels],
            category_ids,
            feature_dimension,
            feature_source,
        }
    }

    pub fn new(
        weights: Vec<f64>,
        biases: Vec<f64>,
        category_ids: Vec<String>,
        feature_dimension: usize,
        feature_source: FeatureSource,
    ) -> Result<Self, ModelError> {
        if weights.len() != category_ids.len() * feature_dimension {
            return Err(ModelError::Dimension(format!(
                "weight count {} does not match {} labels x {} features",
                weights.len(),
                category_ids.len(),
                feature_dimension
            )));
        }
        if biases.len() != category_ids.len() {
            return Err(ModelError::Dimension(format!(
                "bias count {} does not match {} labels",
                biases.len(),
                category_ids.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid(
                "head parameters must be finite".to_string(),
            ));
        }
        Ok(LinearHead {
            weights,
            biases,
            category_ids,
            feature_dimension,
            feature_source,
        })
    }

    pub fn labels(&self) -> usize {
        self.category_ids.len()
    }

    pub fn feature_dimension(&self) -> usize {
        self.feature_dimension
    }

    pub fn feature_source(&self) -> FeatureSource {
        self.feature_source
    }

    pub fn category_ids(&self) -> &[String] {
        &self.category_ids
    }

    pub fn weight_row(&self, label: usize) -> &[f64] {
        &self.weights[label * self.feature_dimension..(label + 1) * self.feature_dimension]
    }

    pub fn bias(&self, label: usize) -> f64 {
        self.biases[label]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-label probabilities `sigmoid(w_l . x + b_l)`.
pub fn forward(head: &LinearHead, features: &FeatureVector) -> Result<Vec<f64>, ModelError> {
    if features.dimension() != head.feature_dimension {
        return Err(ModelError::Dimension(format!(
            "feature dimension {} does not match head dimension {}",
            features.dimension(),
            head.feature_dimension
        )));
    }
    Ok((0..head.labels())
        .map(|l| sigmoid(features.dot(head.weight_row(l)) + head.bias(l)))
        .collect())
}

/// Mean binary cross-entropy over labels. Targets may be fractional
/// (soft labels); probabilities are clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probabilities: &[f64], targets: &[f64]) -> Result<f64, ModelError> {
    if probabilities.len() != targets.len() || probabilities.is_empty() {
        return Err(ModelError::Dimension(
            "probability and target lengths differ or are zero".to_string(),
        ));
    }
    let mut sum = 0.0;
    for (&p, &y) in probabilities.iter().zip(targets) {
        if !(0.0..=1.0).contains(&y) {
            return Err(ModelError::Invalid(format!("target {y} out of [0,1]")));
        }
        let p = p.clamp(EPS, 1.0 - EPS);
        sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(sum / probabilities.len() as f64)
}

/// One training example: a feature vector and its target row.
pub struct Example<'a> {
    pub features: &'a FeatureVector,
    pub target: &'a [f64],
}

/// Weight and bias gradients, shaped like the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Analytic gradient of the batch-mean BCE: for label `l`,
/// `d/dw_l = mean_batch((p_l - y_l) . x) / L` (the `1/L` matches the
/// mean-over-labels loss), and likewise for the bias.
pub fn gradient(head: &LinearHead, batch: &[Example]) -> Result<Gradients, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let labels = head.labels();
    let dim = head.feature_dimension;
    let mut grad_w = vec![0.0; labels * dim];
    let mut grad_b = vec![0.0; labels];
    let scale = 1.0 / (batch.len() as f64 * labels as f64);
    for example in batch {
        if example.target.len() != labels {
            return Err(ModelError::Dimension(format!(
                "target length {} does not match {labels} labels",
                example.target.len()
            )));
        }
        for &y in example.target {
            if !(0.0..=1.0).contains(&y) {
                return Err(ModelError::Invalid(format!("target {y} out of [0,1]")));
            }
        }
        let probabilities = forward(head, example.features)?;
        for l in 0..labels {
            let coefficient = (probabilities[l] - example.target[l]) * scale;
            grad_b[l] += coefficient;
            let row = l * dim;
            example
                .features
                .for_each_entry(|i, v| grad_w[row + i] += coefficient * v);
        }
    }
    Ok(Gradients {
        weights: grad_w,
        biases: grad_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub const DEFAULT_EPOCHS: usize = 4;
    pub const DEFAULT_BATCH_SIZE: usize = 8;
    /// Default step size for externally computed embedding features.
    pub const DEFAULT_LEARNING_RATE_EMBEDDING: f64 = 2e-5;
    /// Default step size for unit-norm TF-IDF features, where 2e-5 would
    /// barely move a fresh head.
    pub const DEFAULT_LEARNING_RATE_TFIDF: f64 = 0.5;

    pub fn for_source(source: FeatureSource, seed: u64) -> Self {
        let learning_rate = match source {
            FeatureSource::Tfidf => Self::DEFAULT_LEARNING_RATE_TFIDF,
            FeatureSource::Embedding => Self::DEFAULT_LEARNING_RATE_EMBEDDING,
        };
        TrainConfig {
            epochs: Self::DEFAULT_EPOCHS,
            learning_rate,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Invalid("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Invalid(
                "batch_size must be at least 1".to_string(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(ModelError::Invalid(format!(
                "learning rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: LinearHead,
    /// Mean batch loss per epoch, in training order.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD from zero initialization with per-step learning rate
/// `lr0 * (1 - step / total_steps)` and an epoch-wise seeded reshuffle.
/// Accepts binary or soft target matrices. Deterministic in
/// `(data, config)`.
pub fn train(
    features: &[FeatureVector],
    targets: &LabelMatrix,
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if features.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if features.len() != targets.rows() {
        return Err(ModelError::Dimension(format!(
            "{} feature rows vs {} target rows",
            features.len(),
            targets.rows()
        )));
    }
    let dim = features[0].dimension();
    if features.iter().any(|f| f.dimension() != dim) {
        return Err(ModelError::Dimension(
            "feature vectors have inconsistent dimensions".to_string(),
        ));
    }
    let source = features[0].source();

    let mut head = LinearHead::zeros(targets.category_ids().to_vec(), dim, source);
    let n = features.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (config.epochs * batches_per_epoch) as f64;

    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk
                .iter()
                .map(|&i| Example {
                    features: &features[i],
                    target: targets.row(i),
                })
                .collect();
            let mut batch_loss = 0.0;
            for example in &batch {
                let probabilities = forward(&head, example.features)?;
                batch_loss += bce_loss(&probabilities, example.target)?;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFinite { step });
            }
            loss_sum += batch_loss;

            let grads = gradient(&head, &batch)?;
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps);
            for (w, g) in head.weights.iter_mut().zip(&grads.weights) {
                *w -= lr * g;
            }
            for (b, g) in head.biases.iter_mut().zip(&grads.biases) {
                *b -= lr * g;
            }
            step += 1;
        }
        epoch_losses.push(loss_sum / batches_per_epoch as f64);
    }
    Ok(TrainOutcome { head, epoch_losses })
}

/// Per-category decision thresholds in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    values: Vec<f64>,
}

impl ThresholdVector {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn uniform(labels: usize, value: f64) -> Result<Self, ModelError> {
        ThresholdVector::new(vec![value; labels])
    }

    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ModelError::Invalid(
                "thresholds must lie in [0,1]".to_string(),
            ));
        }
        Ok(ThresholdVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Probabilities plus the labels passing their thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: BTreeSet<String>,
}

/// Assigns every label with `p_l > t_l` (strict); the set may be empty.
pub fn predict(
    head: &LinearHead,
    features: &FeatureVector,
    thresholds: &ThresholdVector,
) -> Result<Prediction, ModelError> {
    if thresholds.values().len() != head.labels() {
        return Err(ModelError::Dimension(format!(
            "{} thresholds vs {} labels",
            thresholds.values().len(),
            head.labels()
        )));
    }
    let probabilities = forward(head, features)?;
    let labels = probabilities
        .iter()
        .zip(thresholds.values())
        .enumerate()
        .filter(|(_, (p, t))| *p > *t)
        .map(|(l, _)| head.category_ids[l].clone())
        .collect();
    Ok(Prediction {
        probabilities,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    /// Keep precision at or above this value when possible (default 0.85).
    pub precision_target: f64,
    /// Grid spacing for candidate thresholds (default 0.01).
    pub grid_step: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            precision_target: 0.85,
            grid_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationWarning {
    pub category_id: String,
    pub message: String,
}

/// Per category, sweeps thresholds `{step, 2*step, ..., 1-step}` on the
/// validation set. Among thresholds reaching the precision target it picks
/// the one with maximal recall (ties: higher precision, then lower
/// threshold); if none reaches the target it picks maximal precision
/// (ties: higher recall, then lower threshold). Categories without
/// validation positives fall back to 0.5 with a warning.
pub fn calibrate_thresholds(
    head: &LinearHead,
    features: &[FeatureVector],
    gold: &LabelMatrix,
    options: &CalibrationOptions,
) -> Result<(ThresholdVector, Vec<CalibrationWarning>), ModelError> {
    if gold.mode() != LabelMode::Binary {
        return Err(ModelError::Invalid(
            "calibration needs a binary validation matrix".to_string(),
        ));
    }
    if features.is_empty() || features.len() != gold.rows() {
        return Err(ModelError::Dimension(format!(
            "{} feature rows vs {} validation rows",
            features.len(),
            gold.rows()
        )));
    }
    if gold.category_ids() != head.category_ids() {
        return Err(ModelError::Dimension(
            "validation categories do not match the head".to_string(),
        ));
    }
    if !(options.grid_step > 0.0 && options.grid_step < 1.0) {
        return Err(ModelError::Invalid(format!(
            "grid_step {} out of (0,1)",
            options.grid_step
        )));
    }

    let probabilities: Vec<Vec<f64>> = features
        .iter()
        .map(|f| forward(head, f))
        .collect::<Result<_, _>>()?;

    let grid_points = (1.0 / options.grid_step).round() as usize;
    let mut thresholds = Vec::with_capacity(head.labels());
    let mut warnings = Vec::new();
    for l in 0..head.labels() {
        let positives = (0..gold.rows()).filter(|&r| gold.get(r, l) > 0.0).count();
        if positives == 0 {
            warnings.push(CalibrationWarning {
                category_id: head.category_ids[l].clone(),
                message: "no validation positives; threshold left at 0.5".to_string(),
            });
            thresholds.push(ThresholdVector::DEFAULT_THRESHOLD);
            continue;
        }

        // (meets_target, recall, precision) for the target branch,
        // (precision, recall) for the fallback; lower threshold wins ties
        // because the scan ascends and replaces only on strict improvement
        let mut best_meeting: Option<(f64, f64, f64)> = None; // (recall, precision, t)
        let mut best_fallback: Option<(f64, f64, f64)> = None; // (precision, recall, t)
        for k in 1..grid_points {
            let t = k as f64 * options.grid_step;
            let mut tp = 0usize;
            let mut fp = 0usize;
            for (row, probs) in probabilities.iter().enumerate() {
                if probs[l] > t {
                    if gold.get(row, l) > 0.0 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let precision = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let recall = tp as f64 / positives as f64;

            if precision >= options.precision_target {
                let better = match best_meeting {
                    None => true,
                    Some((br, bp, _)) => recall > br || (recall == br && precision > bp),
                };
                if better {
                    best_meeting = Some((recall, precision, t));
                }
            }
            let better = match best_fallback {
                None => true,
                Some((bp, br, _)) => precision > bp || (precision == bp && recall > br),
            };
            if better {
                best_fallback = Some((precision, recall, t));
            }
        }
        let chosen = best_meeting
            .map(|(_, _, t)| t)
            .or(best_fallback.map(|(_, _, t)| t))
            .unwrap_or(ThresholdVector::DEFAULT_THRESHOLD);
        thresholds.push(chosen);
    }
    Ok((ThresholdVector::new(thresholds)?, warnings))
}

// --- Persistence -------------------------------------------------------------

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    term: String,
    index: usize,
    idf: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    category_ids: Vec<String>,
    feature_source: FeatureSource,
    dimension: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<VocabEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary_document_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary_min_document_frequency: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub head: LinearHead,
    pub thresholds: ThresholdVector,
    pub vocabulary: Option<Vocabulary>,
}

/// Serializes head, thresholds, and (for TF-IDF models) the vocabulary to
/// JSON. Loading the result restores every field bit-exactly.
pub fn save_model(
    head: &LinearHead,
    thresholds: &ThresholdVector,
    vocabulary: Option<&Vocabulary>,
) -> Result<Vec<u8>, ModelError> {
    if thresholds.values().len() != head.labels() {
        return Err(ModelError::Dimension(format!(
            "{} thresholds vs {} labels",
            thresholds.values().len(),
            head.labels()
        )));
    }
    if let Some(vocab) = vocabulary {
        if vocab.dimension() != head.feature_dimension {
            return Err(ModelError::Dimension(format!(
                "vocabulary dimension {} vs head dimension {}",
                vocab.dimension(),
                head.feature_dimension
            )));
        }
    }
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        category_ids: head.category_ids.clone(),
        feature_source: head.feature_source,
        dimension: head.feature_dimension,
        weights: head.weights.clone(),
        biases: head.biases.clone(),
        thresholds: thresholds.values().to_vec(),
        vocabulary: vocabulary.map(|v| {
            v.entries()
                .map(|(term, index, idf)| VocabEntry {
                    term: term.to_string(),
                    index,
                    idf,
                })
                .collect()
        }),
        vocabulary_document_count: vocabulary.map(Vocabulary::document_count),
        vocabulary_min_document_frequency: vocabulary.map(Vocabulary::min_document_frequency),
    };
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_model(bytes: &[u8]) -> Result<LoadedModel, ModelError> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version {
            found: file.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let head = LinearHead::new(
        file.weights,
        file.biases,
        file.category_ids,
        file.dimension,
        file.feature_source,
    )?;
    let thresholds = ThresholdVector::new(file.thresholds)?;
    if thresholds.values().len() != head.labels() {
        return Err(ModelError::Dimension(format!(
            "{} thresholds vs {} labels",
            thresholds.values().len(),
            head.labels()
        )));
    }
    let vocabulary = file
        .vocabulary
        .map(|entries| {
            Vocabulary::from_entries(
                entries
                    .into_iter()
                    .map(|e| (e.term, e.index, e.idf))
                    .collect(),
                file.vocabulary_document_count.unwrap_or(0),
                file.vocabulary_min_document_frequency.unwrap_or(0),
            )
        })
        .transpose()?;
    Ok(LoadedModel {
        head,
        thresholds,
        vocabulary,
    })
}
