//! Synthetic lead-I corpus with four rhythm classes.
//!
//! Beats are sums of Gaussian P/Q/R/S/T bumps. Every class shares a slow
//! baseline wander, white sensor noise and a per-record gain factor.
//!
//! * NSR: regular RR (jitter clipped to ±2.5 %), full P–QRS–T template.
//! * AFIB: RR drawn independently (sample CV forced ≥ 0.20), no P wave,
//!   4–9 Hz fibrillatory baseline.
//! * OTHER: regular rhythm with a widened, notched QRS and inverted T, or a
//!   2nd-degree block where every m-th QRS is dropped while P waves continue.
//! * NOISE: band-limited noise, a near-flatline, or motion-like drift with bursts.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PreprocessError, MAX_SEGMENT_S, MIN_SEGMENT_S};
use crate::ecg_io::EcgRecord;
use crate::label::Label;

const MIN_RR_S: f64 = 0.3;
const NSR_JITTER_SD: f64 = 0.012;
const NSR_JITTER_CLIP: f64 = 0.025;
const AFIB_SPREAD: f64 = 0.45;
const AFIB_MIN_CV: f64 = 0.20;
const WANDER_MV: f64 = 0.08;
const SENSOR_NOISE_MV: f64 = 0.015;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class: Label,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    pub heart_rate_bpm: (f64, f64),
    pub seed: u64,
}

impl SynthSpec {
    /// Spec with the class's default heart-rate range.
    pub fn new(class: Label, duration_s: f64, sampling_rate_hz: f64, seed: u64) -> Self {
        let heart_rate_bpm = match class {
            Label::Afib => (70.0, 140.0),
            Label::Other => (50.0, 90.0),
            _ => (60.0, 100.0),
        };
        Self {
            class,
            duration_s,
            sampling_rate_hz,
            heart_rate_bpm,
            seed,
        }
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        if self.class.model_index().is_none() {
            return Err(PreprocessError::InvalidArgument(format!(
                "{} is not a synthesizable class",
                self.class
            )));
        }
        if !(MIN_SEGMENT_S..=MAX_SEGMENT_S).contains(&self.duration_s) {
            return Err(PreprocessError::InvalidArgument(format!(
                "duration {} s outside [{MIN_SEGMENT_S}, {MAX_SEGMENT_S}]",
                self.duration_s
            )));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz >= 100.0) {
            return Err(PreprocessError::InvalidArgument(format!(
                "sampling rate {} Hz is below 100 Hz",
                self.sampling_rate_hz
            )));
        }
        let (lo, hi) = self.heart_rate_bpm;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi && hi <= 60.0 / MIN_RR_S) {
            return Err(PreprocessError::InvalidArgument(format!(
                "heart-rate range ({lo}, {hi}) bpm is empty or out of bounds"
            )));
        }
        Ok(())
    }
}

/// A generated record together with its four-way class.
///
/// The record's reference label is set for AFIB/NSR/OTHER and left empty for
/// NOISE, which is not a reference class.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub record: EcgRecord,
    pub class: Label,
}

pub fn synth_dataset(specs: &[SynthSpec]) -> Result<Vec<SynthRecord>, PreprocessError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            spec.validate()?;
            let samples_mv = synthesize(spec);
            let samples_uv = samples_mv.iter().map(|v| v * 1000.0).collect();
            let id = format!("syn{i:04}_{}", spec.class.as_str().to_lowercase());
            let label = spec.class.is_reference().then_some(spec.class);
            let record = EcgRecord::new(
                id,
                spec.sampling_rate_hz,
                vec!["I".into()],
                vec![samples_uv],
                label,
            )
            .map_err(|e| PreprocessError::InvalidArgument(e.to_string()))?;
            Ok(SynthRecord {
                record,
                class: spec.class,
            })
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Wave {
    amp: f64,
    center: f64,
    width: f64,
}

impl Wave {
    const fn new(amp: f64, center: f64, width: f64) -> Self {
        Self { amp, center, width }
    }

    fn at(&self, t: f64) -> f64 {
        let z = (t - self.center) / self.width;
        self.amp * (-0.5 * z * z).exp()
    }
}

struct Beat {
    time: f64,
    p: Option<Wave>,
    complex: Vec<Wave>,
}

fn normal_complex(scale: f64, t_amp: f64) -> Vec<Wave> {
    vec![
        Wave::new(-0.12 * scale, -0.035, 0.010),
        Wave::new(1.10 * scale, 0.0, 0.011),
        Wave::new(-0.30 * scale, 0.035, 0.011),
        Wave::new(t_amp * scale, 0.28, 0.05),
    ]
}

fn wide_complex(scale: f64) -> Vec<Wave> {
    vec![
        Wave::new(-0.10 * scale, -0.06, 0.020),
        Wave::new(0.80 * scale, -0.02, 0.026),
        Wave::new(0.60 * scale, 0.07, 0.026),
        Wave::new(-0.25 * scale, 0.12, 0.020),
        Wave::new(-0.25 * scale, 0.36, 0.06),
    ]
}

fn p_wave(scale: f64) -> Wave {
    Wave::new(0.15 * scale, -0.17, 0.022)
}

fn regular_rr(rng: &mut ChaCha8Rng, mean_rr: f64, count: usize) -> Vec<f64> {
    let jitter = Normal::new(0.0, NSR_JITTER_SD).expect("valid sd");
    (0..count)
        .map(|_| {
            let j: f64 = jitter.sample(rng);
            mean_rr * (1.0 + j.clamp(-NSR_JITTER_CLIP, NSR_JITTER_CLIP))
        })
        .collect()
}

fn coefficient_of_variation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn irregular_rr(rng: &mut ChaCha8Rng, mean_rr: f64, duration_s: f64) -> Vec<f64> {
    let mut best = Vec::new();
    for _ in 0..64 {
        let mut rr = Vec::new();
        let mut t = 0.0;
        while t < duration_s + 2.0 {
            let v = (mean_rr * (1.0 + rng.random_range(-AFIB_SPREAD..AFIB_SPREAD))).max(MIN_RR_S);
            t += v;
            rr.push(v);
        }
        // Only intervals that fall inside the record count towards the CV.
        let inside = rr.iter().scan(0.0, |acc, v| {
            *acc += v;
            Some((*acc, *v))
        });
        let visible: Vec<f64> = inside
            .take_while(|(acc, _)| *acc < duration_s)
            .map(|(_, v)| v)
            .collect();
        let accepted = visible.len() >= 3 && coefficient_of_variation(&visible) >= AFIB_MIN_CV;
        best = rr;
        if accepted {
            break;
        }
    }
    best
}

fn synthesize(spec: &SynthSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fs = spec.sampling_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    let time = |i: usize| i as f64 / fs;
    let gain = rng.random_range(0.6..1.4);
    let white = Normal::new(0.0, SENSOR_NOISE_MV).expect("valid sd");

    let mut x = vec![0.0; n];

    if spec.class == Label::Noise {
        synth_noise(&mut rng, &mut x, fs);
    } else {
        let (lo, hi) = spec.heart_rate_bpm;
        let bpm = if lo < hi {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let mean_rr = 60.0 / bpm;
        let scale = rng.random_range(0.8..1.2);
        let t_amp = rng.random_range(0.2..0.4);
        let est_beats = (spec.duration_s / mean_rr).ceil() as usize + 4;

        let beats: Vec<Beat> = match spec.class {
            Label::Nsr => {
                let rr = regular_rr(&mut rng, mean_rr, est_beats);
                place(&rr, rng.random_range(0.0..mean_rr), |_| {
                    (Some(p_wave(scale)), normal_complex(scale, t_amp))
                })
            }
            Label::Afib => {
                let rr = irregular_rr(&mut rng, mean_rr, spec.duration_s);
                place(&rr, rng.random_range(0.0..mean_rr), |_| {
                    (None, normal_complex(scale, t_amp))
                })
            }
            _ => {
                let rr = regular_rr(&mut rng, mean_rr, est_beats);
                let offset = rng.random_range(0.0..mean_rr);
                if rng.random_bool(0.5) {
                    place(&rr, offset, |_| (Some(p_wave(scale)), wide_complex(scale)))
                } else {
                    let period = rng.random_range(3..=4usize);
                    let phase = rng.random_range(0..period);
                    place(&rr, offset, |k| {
                        let complex = if k % period == phase {
                            Vec::new()
                        } else {
                            normal_complex(scale, t_amp)
                        };
                        (Some(p_wave(scale)), complex)
                    })
                }
            }
        };

        for beat in &beats {
            let lo = ((beat.time - 0.45) * fs).floor().max(0.0) as usize;
            let hi = (((beat.time + 0.7) * fs).ceil() as usize).min(n);
            for (i, xi) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let t = time(i) - beat.time;
                let mut v = beat.p.map_or(0.0, |p| p.at(t));
                v += beat.complex.iter().map(|w| w.at(t)).sum::<f64>();
                *xi += v;
            }
        }

        if spec.class == Label::Afib {
            let amp = rng.random_range(0.04..0.10);
            let components: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(4.0..9.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            let mod_f = rng.random_range(0.1..0.4);
            for (i, xi) in x.iter_mut().enumerate() {
                let t = time(i);
                let envelope = 1.0 + 0.3 * (2.0 * PI * mod_f * t).sin();
                let f: f64 = components
                    .iter()
                    .map(|(f, ph)| (2.0 * PI * f * t + ph).sin())
                    .sum();
                *xi += amp * envelope * f / 1.5;
            }
        }
    }

    let wander_f = rng.random_range(0.15..0.4);
    let wander_phase = rng.random_range(0.0..2.0 * PI);
    for (i, xi) in x.iter_mut().enumerate() {
        let t = time(i);
        *xi += WANDER_MV * (2.0 * PI * wander_f * t + wander_phase).sin();
        *xi += white.sample(&mut rng);
        *xi *= gain;
    }
    x
}

fn place(
    rr: &[f64],
    offset: f64,
    mut shape: impl FnMut(usize) -> (Option<Wave>, Vec<Wave>),
) -> Vec<Beat> {
    let mut t = offset;
    rr.iter()
        .enumerate()
        .map(|(k, interval)| {
            let (p, complex) = shape(k);
            let beat = Beat {
                time: t,
                p,
                complex,
            };
            t += interval;
            beat
        })
        .collect()
}

fn synth_noise(rng: &mut ChaCha8Rng, x: &mut [f64], fs: f64) {
    let variant = rng.random_range(0..4u8);
    let n = x.len();
    match variant {
        // Band-limited noise: many random tones across 0.5–40 Hz.
        0 | 1 => {
            let amp = rng.random_range(0.15..0.5);
            let tones: Vec<(f64, f64, f64)> = (0..60)
                .map(|_| {
                    (
                        rng.random_range(0.5..40.0),
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.2..1.0),
                    )
                })
                .collect();
            let norm = amp / (tones.len() as f64 / 2.0).sqrt();
            for (i, xi) in x.iter_mut().enumerate() {
                let t = i as f64 / fs;
                *xi = norm
                    * tones
                        .iter()
                        .map(|(f, ph, a)| a * (2.0 * PI * f * t + ph).sin())
                        .sum::<f64>();
            }
        }
        // Near-flatline: a detached electrode.
        2 => {
            let drift = Normal::new(0.0, 0.0005).expect("valid sd");
            let mut level = 0.0;
            for xi in x.iter_mut() {
                level += drift.sample(rng);
                *xi = level;
            }
        }
        // Motion artifact: random-walk drift with high-amplitude bursts.
        _ => {
            let step = Normal::new(0.0, 0.01).expect("valid sd");
            let mut level = 0.0;
            for xi in x.iter_mut() {
                level = 0.998 * level + step.sample(rng);
                *xi = level;
            }
            let bursts = rng.random_range(2..6);
            for _ in 0..bursts {
                let start = rng.random_range(0..n);
                let len = ((rng.random_range(0.2..1.5)) * fs) as usize;
                let amp = rng.random_range(0.3..1.2);
                let freq = rng.random_range(1.0..15.0);
                for (k, xi) in x.iter_mut().skip(start).take(len).enumerate() {
                    let t = k as f64 / fs;
                    let env = (PI * k as f64 / len as f64).sin();
                    *xi += amp * env * (2.0 * PI * freq * t).sin();
                }
            }
        }
    }
}
