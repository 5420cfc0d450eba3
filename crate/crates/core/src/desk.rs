//! Desk-scale experiment plumbing shared by the CLI and the test suites:
//! a seeded synthetic corpus, a stratified hold-out split, batch image
//! extraction and held-out evaluation of a trained model.

use serde::{Deserialize, Serialize};

use crate::densenet::{
    forward, Mode, ModelConfig, ModelError, Params, Pipeline, PipelineError, Prediction,
};
use crate::ecg_io::EcgRecord;
use crate::label::{Label, MODEL_CLASSES, REFERENCE_CLASSES};
use crate::metrics::{
    accuracy, class_metrics, cohen_kappa, confusion, roc_auc, ClassMetrics, ConfusionMatrix,
    KappaResult, MetricsError, RocCurve, RocTarget,
};
use crate::preprocess::{
    extract_lead, split_segments, PreprocessError, Segment, SynthSpec, MODEL_SAMPLING_RATE_HZ,
};
use crate::scalogram::ModelImage;

#[derive(Debug, thiserror::Error)]
pub enum DeskError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Argument(String),
}

/// Evaluation order: the reference classes, then NOISE.
pub const EVAL_CLASSES: [Label; 4] = [Label::Afib, Label::Nsr, Label::Other, Label::Noise];

/// Specs for `per_class` records of each model class, interleaved
/// NSR, AFIB, OTHER, NOISE. Durations spread over 10–30 s in 0.1 s steps.
pub fn corpus_specs(per_class: usize, seed: u64) -> Vec<SynthSpec> {
    let mut specs = Vec::with_capacity(per_class * MODEL_CLASSES.len());
    for i in 0..per_class as u64 {
        for (c, &class) in MODEL_CLASSES.iter().enumerate() {
            let k = i * MODEL_CLASSES.len() as u64 + c as u64;
            let duration_s = 10.0 + (k.wrapping_mul(7919) % 201) as f64 / 10.0;
            let record_seed = seed.wrapping_mul(1_000_003).wrapping_add(1000 + k);
            specs.push(SynthSpec::new(
                class,
                duration_s,
                MODEL_SAMPLING_RATE_HZ,
                record_seed,
            ));
        }
    }
    specs
}

/// Lead-I segments of every record, each tagged with its record's class.
pub fn labeled_segments(
    records: &[(EcgRecord, Label)],
) -> Result<Vec<(Segment, Label)>, DeskError> {
    let mut out = Vec::new();
    for (record, class) in records {
        let signal = extract_lead(record, "I")?;
        out.extend(split_segments(&signal)?.into_iter().map(|s| (s, *class)));
    }
    Ok(out)
}

/// Indices `(train, held_out)`: within each class, every `holdout_every`-th
/// item (the 1st, the (k+1)-th, …) is held out. `holdout_every == 0` holds
/// out nothing.
pub fn stratified_split(classes: &[Label], holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
    let mut seen = [0usize; 5];
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, class) in classes.iter().enumerate() {
        let slot = &mut seen[*class as usize];
        if holdout_every > 0 && *slot % holdout_every == 0 {
            held.push(i);
        } else {
            train.push(i);
        }
        *slot += 1;
    }
    (train, held)
}

pub fn segment_images(
    config: &ModelConfig,
    segments: &[Segment],
) -> Result<Vec<ModelImage>, DeskError> {
    let mut pipeline = Pipeline::new(config);
    segments
        .iter()
        .map(|s| pipeline.image(s).map_err(DeskError::from))
        .collect()
}

/// Class indices in model output order.
pub fn class_indices(classes: &[Label]) -> Result<Vec<usize>, DeskError> {
    classes
        .iter()
        .map(|c| {
            c.model_index()
                .ok_or_else(|| DeskError::Argument(format!("{c} is not a model class")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    /// Rows and columns in [`EVAL_CLASSES`] order.
    pub matrix: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub kappa: Option<KappaResult>,
    /// One-vs-rest curves for the reference classes, then micro.
    pub roc: Vec<RocCurve>,
}

impl Evaluation {
    pub fn auc(&self, target: &str) -> Option<f64> {
        self.roc.iter().find(|c| c.target == target).map(|c| c.auc)
    }
}

/// Eval-mode predictions in chunks of 32.
pub fn predict_images(
    params: &Params,
    images: &[ModelImage],
) -> Result<Vec<Prediction>, DeskError> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        out.extend(forward(params, chunk, Mode::Eval)?);
    }
    Ok(out)
}

/// Scores predictions against four-way truth. AUCs that are undefined for
/// this composition are left out.
pub fn evaluate(predictions: &[Prediction], truth: &[Label]) -> Result<Evaluation, DeskError> {
    let predicted: Vec<Label> = predictions.iter().map(|p| p.predicted_class).collect();
    let matrix = confusion(truth, &predicted, &EVAL_CLASSES, &EVAL_CLASSES)?;
    let per_class = EVAL_CLASSES
        .iter()
        .map(|&c| class_metrics(&matrix, c))
        .collect::<Result<Vec<_>, _>>()?;
    let kappa = match cohen_kappa(truth, &predicted) {
        Ok(k) => Some(k),
        Err(MetricsError::DegenerateAgreement) => None,
        Err(e) => return Err(e.into()),
    };
    let scores: Vec<[f64; 4]> = predictions.iter().map(|p| p.probabilities).collect();
    let mut roc = Vec::new();
    for target in REFERENCE_CLASSES
        .iter()
        .map(|&c| RocTarget::Class(c))
        .chain([RocTarget::Micro])
    {
        match roc_auc(&scores, truth, target) {
            Ok(c) => roc.push(c),
            Err(MetricsError::UndefinedAuc { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Evaluation {
        n: truth.len(),
        accuracy: accuracy(&matrix)?,
        matrix,
        per_class,
        kappa,
        roc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified() {
        let classes: Vec<Label> = (0..500).map(|i| MODEL_CLASSES[i % 4]).collect();
        let (train, held) = stratified_split(&classes, 5);
        assert_eq!((train.len(), held.len()), (400, 100));
        for c in MODEL_CLASSES {
            assert_eq!(held.iter().filter(|&&i| classes[i] == c).count(), 25);
        }
        assert!(stratified_split(&classes, 0).1.is_empty());
    }

    #[test]
    fn specs_are_seeded_and_in_range() {
        let a = corpus_specs(10, 3);
        assert_eq!(a, corpus_specs(10, 3));
        assert_ne!(a, corpus_specs(10, 4));
        assert_eq!(a.len(), 40);
        assert!(a.iter().all(|s| (10.0..=30.0).contains(&s.duration_s)));
        assert_eq!(a[1].class, Label::Afib);
    }
}
