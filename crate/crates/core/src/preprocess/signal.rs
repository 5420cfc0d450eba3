use super::PreprocessError;
use crate::ecg_io::EcgRecord;
use crate::label::Label;

/// Added to the standard deviation so a flatline normalizes to zeros.
pub const NORMALIZE_EPSILON: f64 = 1e-8;

/// One lead of a record, amplitudes in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadSignal {
    pub record_id: String,
    pub lead_name: String,
    pub sampling_rate_hz: f64,
    pub samples: Vec<f64>,
    pub reference_label: Option<Label>,
}

impl LeadSignal {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }
}

pub fn extract_lead(record: &EcgRecord, lead_name: &str) -> Result<LeadSignal, PreprocessError> {
    let samples = record
        .lead(lead_name)
        .ok_or_else(|| PreprocessError::LeadNotFound {
            requested: lead_name.to_string(),
            available: record.lead_names().to_vec(),
        })?;
    Ok(LeadSignal {
        record_id: record.record_id().to_string(),
        lead_name: lead_name.to_string(),
        sampling_rate_hz: record.sampling_rate_hz(),
        samples: samples.to_vec(),
        reference_label: record.reference_label(),
    })
}

/// Linear interpolation onto a uniform grid at `target_hz`.
///
/// Output sample `j` sits at `j / target_hz` seconds; the grid stops at the
/// last source sample, so values never extrapolate.
pub fn resample(
    samples: &[f64],
    source_hz: f64,
    target_hz: f64,
) -> Result<Vec<f64>, PreprocessError> {
    if !(source_hz.is_finite() && source_hz > 0.0) {
        return Err(PreprocessError::InvalidArgument(format!(
            "source rate must be positive, got {source_hz}"
        )));
    }
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(PreprocessError::InvalidArgument(format!(
            "target rate must be positive, got {target_hz}"
        )));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    if source_hz == target_hz {
        return Ok(samples.to_vec());
    }
    let n = samples.len();
    let step = source_hz / target_hz;
    let n_out = ((n - 1) as f64 / step).floor() as usize + 1;
    let out = (0..n_out)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            if i + 1 >= n {
                return samples[n - 1];
            }
            let frac = pos - i as f64;
            samples[i] + (samples[i + 1] - samples[i]) * frac
        })
        .collect();
    Ok(out)
}

/// Z-score: `(x - mean) / (std + NORMALIZE_EPSILON)` with population std.
pub fn normalize(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + NORMALIZE_EPSILON;
    samples.iter().map(|x| (x - mean) / denom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twelve_lead() -> EcgRecord {
        let names: Vec<String> = crate::ecg_io::TWELVE_LEAD_ORDER
            .iter()
            .map(|s| s.to_string())
            .collect();
        let samples = (0..12).map(|i| vec![i as f64; 4]).collect();
        EcgRecord::new("r12", 500.0, names, samples, Some(Label::Nsr)).unwrap()
    }

    #[test]
    fn extracts_lead_one_unchanged() {
        let rec = twelve_lead();
        let lead = extract_lead(&rec, "I").unwrap();
        assert_eq!(lead.samples, rec.samples()[0]);
        assert_eq!(lead.sampling_rate_hz, 500.0);
        assert_eq!(lead.reference_label, Some(Label::Nsr));
    }

    #[test]
    fn missing_lead_lists_available() {
        let rec = EcgRecord::new("r", 250.0, vec!["I".into()], vec![vec![0.0]], None).unwrap();
        match extract_lead(&rec, "II") {
            Err(PreprocessError::LeadNotFound { available, .. }) => assert_eq!(available, ["I"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resample_identity() {
        let x = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(resample(&x, 360.0, 360.0).unwrap(), x);
    }

    #[test]
    fn resample_ramp_upsampled() {
        let y = resample(&[0.0, 1.0, 2.0, 3.0], 4.0, 8.0).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn resample_count() {
        let x = vec![0.0; 5000];
        let n = resample(&x, 500.0, 250.0).unwrap().len();
        assert!((2499..=2501).contains(&n), "{n}");
    }

    #[test]
    fn resample_rejects_bad_rate() {
        assert!(resample(&[1.0], 250.0, 0.0).is_err());
        assert!(resample(&[1.0], 250.0, -1.0).is_err());
        assert!(resample(&[1.0], 0.0, 250.0).is_err());
    }

    #[test]
    fn normalize_flatline_is_zero() {
        assert!(normalize(&[7.0; 50]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_alternating() {
        let x: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        for (a, b) in normalize(&x).iter().zip(&x) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
