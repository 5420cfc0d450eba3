//! DenseNet-style classifier over scalogram images, trained in `f64` with
//! hand-written reverse-mode gradients.

mod checkpoint;
mod config;
mod network;
mod ops;
mod params;
mod pipeline;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BlockShape, ModelConfig, BN_EPSILON, BN_MOMENTUM, KERNEL};
pub use params::{build_layouts, init_params, Layout, Params, TensorSpec, UNTRAINED_VERSION};
pub use pipeline::{predict_pipeline, Pipeline, PipelineError, PipelineStage};
pub use train::{train, EpochStats, TrainConfig};

use crate::label::{Label, MODEL_CLASSES};
use crate::scalogram::ModelImage;
use network::Network;

pub const CLASS_COUNT: usize = MODEL_CLASSES.len();
/// Lower clamp applied to `p[label]` inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid parameter layout: {0}")]
    Layout(String),
    #[error("image {index} has shape {actual}, expected {expected}")]
    Shape {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("eval mode needs running statistics; the model has never been trained")]
    MissingRunningStats,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers.
    Train,
    /// Running statistics; outputs depend on each sample alone.
    Eval,
}

/// Softmax output over (NSR, AFIB, OTHER, NOISE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: [f64; CLASS_COUNT],
    pub predicted_class: Label,
    pub model_version: String,
}

impl Prediction {
    fn from_probs(probabilities: [f64; CLASS_COUNT], model_version: &str) -> Self {
        let mut best = 0;
        for (i, p) in probabilities.iter().enumerate() {
            if *p > probabilities[best] {
                best = i;
            }
        }
        Self {
            probabilities,
            predicted_class: MODEL_CLASSES[best],
            model_version: model_version.to_string(),
        }
    }

    pub fn probability(&self, label: Label) -> Option<f64> {
        label.model_index().map(|i| self.probabilities[i])
    }
}

/// Runs the network on a batch. Train mode uses batch statistics and leaves
/// the running averages untouched.
pub fn forward(
    params: &Params,
    images: &[ModelImage],
    mode: Mode,
) -> Result<Vec<Prediction>, ModelError> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let net = Network::new(&params.config)?;
    let out = net.forward(params, images, mode)?;
    Ok(out
        .cache
        .probs
        .into_iter()
        .map(|p| Prediction::from_probs(p, &params.model_version))
        .collect())
}

fn check_labels(labels: &[usize], n: usize) -> Result<(), ModelError> {
    if labels.len() != n {
        return Err(ModelError::InvalidArgument(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= CLASS_COUNT) {
        return Err(ModelError::InvalidArgument(format!(
            "label {bad} outside [0, {CLASS_COUNT})"
        )));
    }
    Ok(())
}

fn loss_of(probs: &[[f64; CLASS_COUNT]], labels: &[usize]) -> f64 {
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(PROB_FLOOR).ln())
        .sum();
    sum / probs.len() as f64
}

/// Mean of `-ln max(p[label], 1e-12)` over the batch.
pub fn cross_entropy(predictions: &[Prediction], labels: &[usize]) -> Result<f64, ModelError> {
    if predictions.is_empty() {
        return Err(ModelError::InvalidArgument("empty batch".into()));
    }
    check_labels(labels, predictions.len())?;
    let probs: Vec<_> = predictions.iter().map(|p| p.probabilities).collect();
    Ok(loss_of(&probs, labels))
}

/// Train-mode loss and its exact gradient over `params.values`.
pub fn grad(
    params: &Params,
    images: &[ModelImage],
    labels: &[usize],
) -> Result<(f64, Vec<f64>), ModelError> {
    let (loss, g, _) = loss_and_grad(&Network::new(&params.config)?, params, images, labels)?;
    Ok((loss, g))
}

/// Train-mode loss only; the finite-difference side of gradient checks.
pub fn train_loss(
    params: &Params,
    images: &[ModelImage],
    labels: &[usize],
) -> Result<f64, ModelError> {
    if images.is_empty() {
        return Err(ModelError::InvalidArgument("empty batch".into()));
    }
    check_labels(labels, images.len())?;
    let out = Network::new(&params.config)?.forward(params, images, Mode::Train)?;
    Ok(loss_of(&out.cache.probs, labels))
}

fn loss_and_grad(
    net: &Network,
    params: &Params,
    images: &[ModelImage],
    labels: &[usize],
) -> Result<(f64, Vec<f64>, network::Outputs), ModelError> {
    if images.is_empty() {
        return Err(ModelError::InvalidArgument("empty batch".into()));
    }
    check_labels(labels, images.len())?;
    let out = net.forward(params, images, Mode::Train)?;
    let loss = loss_of(&out.cache.probs, labels);
    if !loss.is_finite() {
        return Err(ModelError::Numeric(format!("non-finite loss {loss}")));
    }
    let g = net.backward(params, &out.cache, labels);
    Ok((loss, g, out))
}
