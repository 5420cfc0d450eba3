use std::collections::HashSet;

use super::{EcgIoError, Result};
use crate::label::Label;

/// Standard 12-lead order.
pub const TWELVE_LEAD_ORDER: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// A multi-lead sampled waveform, amplitudes in microvolts.
///
/// Construction validates the invariants: at least one lead, equal and
/// nonzero sample counts, unique lead names, positive finite sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    record_id: String,
    sampling_rate_hz: f64,
    lead_names: Vec<String>,
    samples: Vec<Vec<f64>>,
    reference_label: Option<Label>,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        sampling_rate_hz: f64,
        lead_names: Vec<String>,
        samples: Vec<Vec<f64>>,
        reference_label: Option<Label>,
    ) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(EcgIoError::InvalidRecord(format!(
                "sampling rate must be positive and finite, got {sampling_rate_hz}"
            )));
        }
        if lead_names.is_empty() {
            return Err(EcgIoError::InvalidRecord("record has no leads".into()));
        }
        if lead_names.len() != samples.len() {
            return Err(EcgIoError::InvalidRecord(format!(
                "{} lead names for {} sample arrays",
                lead_names.len(),
                samples.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &lead_names {
            if !seen.insert(name.as_str()) {
                return Err(EcgIoError::InvalidRecord(format!(
                    "duplicate lead name `{name}`"
                )));
            }
        }
        let n = samples[0].len();
        if n == 0 {
            return Err(EcgIoError::InvalidRecord("record has no samples".into()));
        }
        if let Some((i, lead)) = samples.iter().enumerate().find(|(_, s)| s.len() != n) {
            return Err(EcgIoError::InvalidRecord(format!(
                "lead {} has {} samples, lead {} has {n}",
                lead_names[i],
                lead.len(),
                lead_names[0]
            )));
        }
        if let Some(label) = reference_label {
            if !label.is_reference() {
                return Err(EcgIoError::InvalidRecord(format!(
                    "{label} is not a reference class"
                )));
            }
        }
        Ok(Self {
            record_id: record_id.into(),
            sampling_rate_hz,
            lead_names,
            samples,
            reference_label,
        })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn lead_names(&self) -> &[String] {
        &self.lead_names
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn lead(&self, name: &str) -> Option<&[f64]> {
        self.lead_names
            .iter()
            .position(|l| l == name)
            .map(|i| self.samples[i].as_slice())
    }

    pub fn n_leads(&self) -> usize {
        self.lead_names.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.sample_count() as f64 / self.sampling_rate_hz
    }

    pub fn reference_label(&self) -> Option<Label> {
        self.reference_label
    }

    pub fn with_reference_label(mut self, label: Option<Label>) -> Result<Self> {
        if let Some(l) = label {
            if !l.is_reference() {
                return Err(EcgIoError::InvalidRecord(format!(
                    "{l} is not a reference class"
                )));
            }
        }
        self.reference_label = label;
        Ok(self)
    }
}
