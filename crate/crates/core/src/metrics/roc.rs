use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::label::{Label, MODEL_CLASSES, REFERENCE_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RocTarget {
    /// One-vs-rest on a single class's probability.
    Class(Label),
    /// Every (item, reference class) decision pooled into one binary problem.
    Micro,
}

impl fmt::Display for RocTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Class(l) => write!(f, "{l}"),
            Self::Micro => f.write_str("micro"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub target: String,
    /// `(false-positive rate, true-positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Threshold producing `points[i + 1]` (scores ≥ threshold are positive).
    pub thresholds: Vec<f64>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// ROC over a binary problem. Thresholds sweep the distinct scores from high
/// to low, so tied scores move the curve diagonally and earn half credit.
pub fn roc_binary(
    scores: &[f64],
    positives: &[bool],
    target: &str,
) -> Result<RocCurve, MetricsError> {
    if scores.len() != positives.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: positives.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index });
    }
    let p = positives.iter().filter(|&&b| b).count();
    let n = positives.len() - p;
    if p == 0 || n == 0 {
        return Err(MetricsError::UndefinedAuc {
            target: target.to_string(),
            positives: p,
            negatives: n,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Twice the trapezoid in count units: Δfp · (tp0 + tp).
        area2 += (fp - fp0) as u128 * (tp0 + tp) as u128;
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
        thresholds.push(threshold);
    }
    Ok(RocCurve {
        target: target.to_string(),
        points,
        thresholds,
        auc: area2 as f64 / (2 * p as u128 * n as u128) as f64,
        positives: p,
        negatives: n,
    })
}

/// ROC/AUC from per-item classifier probabilities (model output order).
pub fn roc_auc(
    scores: &[[f64; MODEL_CLASSES.len()]],
    ref_labels: &[Label],
    target: RocTarget,
) -> Result<RocCurve, MetricsError> {
    if scores.len() != ref_labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: ref_labels.len(),
        });
    }
    let (flat, pos): (Vec<f64>, Vec<bool>) = match target {
        RocTarget::Class(class) => {
            let k = class
                .model_index()
                .ok_or(MetricsError::NotReferenceClass(class))?;
            scores
                .iter()
                .zip(ref_labels)
                .map(|(s, &r)| (s[k], r == class))
                .unzip()
        }
        RocTarget::Micro => scores
            .iter()
            .zip(ref_labels)
            .flat_map(|(s, &r)| {
                REFERENCE_CLASSES.iter().map(move |&c| {
                    let k = c
                        .model_index()
                        .expect("reference classes are model classes");
                    (s[k], r == c)
                })
            })
            .unzip(),
    };
    roc_binary(&flat, &pos, &target.to_string())
}
