//! Lead-I extraction, 10–30 s segmentation, resampling, z-scoring and the
//! synthetic four-class corpus generator.

mod segment;
mod signal;
mod synth;

pub use segment::{split_segments, Segment, MAX_SEGMENT_S, MIN_SEGMENT_S};
pub use signal::{extract_lead, normalize, resample, LeadSignal, NORMALIZE_EPSILON};
pub use synth::{synth_dataset, SynthRecord, SynthSpec};

/// Sampling rate the classifier expects its input at.
pub const MODEL_SAMPLING_RATE_HZ: f64 = 250.0;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("lead `{requested}` not found; record has {available:?}")]
    LeadNotFound {
        requested: String,
        available: Vec<String>,
    },
    #[error("{record_id}: {duration_s:.3} s is shorter than the {MIN_SEGMENT_S} s minimum")]
    TooShort { record_id: String, duration_s: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
