use super::{LeadSignal, PreprocessError};
use crate::label::Label;

pub const MIN_SEGMENT_S: f64 = 10.0;
pub const MAX_SEGMENT_S: f64 = 30.0;

/// A single-lead excerpt of 10–30 s with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub parent_id: String,
    pub segment_index: usize,
    pub lead_name: String,
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
    pub start_s: f64,
    pub duration_s: f64,
    pub reference_label: Option<Label>,
}

impl Segment {
    /// Wraps a whole signal as one segment, checking the duration bounds.
    pub fn whole(signal: LeadSignal) -> Result<Self, PreprocessError> {
        let duration_s = signal.duration_s();
        if !(MIN_SEGMENT_S..=MAX_SEGMENT_S).contains(&duration_s) {
            return Err(PreprocessError::InvalidArgument(format!(
                "segment duration {duration_s:.3} s outside [{MIN_SEGMENT_S}, {MAX_SEGMENT_S}]"
            )));
        }
        Ok(Segment {
            parent_id: signal.record_id,
            segment_index: 0,
            lead_name: signal.lead_name,
            samples: signal.samples,
            sampling_rate_hz: signal.sampling_rate_hz,
            start_s: 0.0,
            duration_s,
            reference_label: signal.reference_label,
        })
    }

    /// Sample range of this window within the parent signal.
    pub fn sample_range(&self) -> std::ops::Range<usize> {
        let start = (self.start_s * self.sampling_rate_hz).round() as usize;
        start..start + self.samples.len()
    }
}

/// Window bounds `(start, end)` in samples for a signal of `n` samples.
///
/// Greedy non-overlapping 30 s windows from the start. A remainder of at least
/// 10 s becomes the last window; a shorter nonzero remainder is covered by the
/// trailing 10 s window ending at the signal end.
pub(crate) fn window_bounds(n: usize, fs: f64) -> Option<Vec<(usize, usize)>> {
    let max_len = (MAX_SEGMENT_S * fs + 1e-9).floor() as usize;
    let min_len = (MIN_SEGMENT_S * fs - 1e-9).ceil() as usize;
    if n < min_len || max_len == 0 {
        return None;
    }
    let full = n / max_len;
    let mut windows: Vec<(usize, usize)> = (0..full)
        .map(|k| (k * max_len, (k + 1) * max_len))
        .collect();
    let remainder = n - full * max_len;
    if remainder >= min_len {
        windows.push((full * max_len, n));
    } else if remainder > 0 {
        windows.push((n - min_len, n));
    }
    Some(windows)
}

pub fn split_segments(signal: &LeadSignal) -> Result<Vec<Segment>, PreprocessError> {
    let fs = signal.sampling_rate_hz;
    let windows =
        window_bounds(signal.samples.len(), fs).ok_or_else(|| PreprocessError::TooShort {
            record_id: signal.record_id.clone(),
            duration_s: signal.duration_s(),
        })?;
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(segment_index, (start, end))| Segment {
            parent_id: signal.record_id.clone(),
            segment_index,
            lead_name: signal.lead_name.clone(),
            samples: signal.samples[start..end].to_vec(),
            sampling_rate_hz: fs,
            start_s: start as f64 / fs,
            duration_s: (end - start) as f64 / fs,
            reference_label: signal.reference_label,
        })
        .collect())
}
