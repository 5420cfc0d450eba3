use std::fmt;

use super::{forward, Mode, ModelConfig, ModelError, Params, Prediction};
use crate::preprocess::{
    normalize, resample, Segment, MAX_SEGMENT_S, MIN_SEGMENT_S, MODEL_SAMPLING_RATE_HZ,
};
use crate::scalogram::{to_model_input, CwtPlan, ModelImage, ScaleGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStage {
    Segment,
    Resample,
    Cwt,
    Forward,
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Segment => "segment",
            Self::Resample => "resample",
            Self::Cwt => "cwt",
            Self::Forward => "forward",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: PipelineStage,
    pub message: String,
    /// Set when the forward stage failed; lets callers tell shape or
    /// untrained-model problems apart.
    pub model_error: Option<ModelError>,
}

impl PipelineError {
    fn new(stage: PipelineStage, err: impl fmt::Display) -> Self {
        Self {
            stage,
            message: err.to_string(),
            model_error: None,
        }
    }
}

/// Segment → resample → z-score → CWT → model image → eval-mode forward.
///
/// Holds a CWT plan, so one instance should serve many segments.
pub struct Pipeline {
    plan: CwtPlan,
    height: usize,
    width: usize,
}

impl Pipeline {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            plan: CwtPlan::new(ScaleGrid::default(), MODEL_SAMPLING_RATE_HZ),
            height: config.input_height,
            width: config.input_width,
        }
    }

    pub fn image(&mut self, segment: &Segment) -> Result<ModelImage, PipelineError> {
        let duration = segment.samples.len() as f64 / segment.sampling_rate_hz;
        if !(MIN_SEGMENT_S - 1e-9..=MAX_SEGMENT_S + 1e-9).contains(&duration) {
            return Err(PipelineError::new(
                PipelineStage::Segment,
                format!(
                    "{} s outside [{MIN_SEGMENT_S}, {MAX_SEGMENT_S}] s",
                    duration
                ),
            ));
        }
        if let Some(i) = segment.samples.iter().position(|v| !v.is_finite()) {
            return Err(PipelineError::new(
                PipelineStage::Segment,
                format!("sample {i} is not finite"),
            ));
        }
        let resampled = resample(
            &segment.samples,
            segment.sampling_rate_hz,
            MODEL_SAMPLING_RATE_HZ,
        )
        .map_err(|e| PipelineError::new(PipelineStage::Resample, e))?;
        let z = normalize(&resampled);
        let coeffs = self
            .plan
            .transform(&z)
            .map_err(|e| PipelineError::new(PipelineStage::Cwt, e))?;
        Ok(to_model_input(
            &coeffs.to_magnitude(&segment.parent_id),
            self.height,
            self.width,
        ))
    }

    pub fn predict(
        &mut self,
        params: &Params,
        segment: &Segment,
    ) -> Result<Prediction, PipelineError> {
        let image = self.image(segment)?;
        let mut preds = forward(params, std::slice::from_ref(&image), Mode::Eval).map_err(|e| {
            PipelineError {
                stage: PipelineStage::Forward,
                message: e.to_string(),
                model_error: Some(e),
            }
        })?;
        Ok(preds.remove(0))
    }
}

/// One-shot convenience wrapper around [`Pipeline`].
pub fn predict_pipeline(params: &Params, segment: &Segment) -> Result<Prediction, PipelineError> {
    Pipeline::new(&params.config).predict(params, segment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densenet::init_params;

    fn segment(samples: Vec<f64>, fs: f64) -> Segment {
        Segment {
            parent_id: "r".into(),
            segment_index: 0,
            lead_name: "I".into(),
            duration_s: samples.len() as f64 / fs,
            samples,
            sampling_rate_hz: fs,
            start_s: 0.0,
            reference_label: None,
        }
    }

    #[test]
    fn flatline_completes() {
        let mut p = init_params(&ModelConfig::default(), 0).unwrap();
        p.stats_updates = 1;
        let pred = predict_pipeline(&p, &segment(vec![0.0; 5000], 500.0)).unwrap();
        assert!((pred.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn errors_carry_stage() {
        let p = init_params(&ModelConfig::default(), 0).unwrap();
        let short = predict_pipeline(&p, &segment(vec![0.0; 100], 250.0)).unwrap_err();
        assert_eq!(short.stage, PipelineStage::Segment);
        let untrained = predict_pipeline(&p, &segment(vec![0.0; 2500], 250.0)).unwrap_err();
        assert_eq!(untrained.stage, PipelineStage::Forward);
        assert!(untrained.to_string().starts_with("forward stage"));
    }
}
