use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, MetricsError};
use crate::label::Label;

/// One-vs-rest counts and scores for a reference class. `None` marks a 0/0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Label,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: u64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
}

impl ClassMetrics {
    pub fn get(&self, which: MetricKind) -> Option<f64> {
        match which {
            MetricKind::Precision => self.precision,
            MetricKind::Recall => self.recall,
            MetricKind::F1 => self.f1,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean `2 / (1/p + 1/r)`, written as `2pr / (p + r)` so that a
/// zero component gives 0 rather than a division by zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

/// Precision, recall and F1 for `class`. False positives count only
/// predictions of `class` on reference rows of another class; answers
/// outside the reference set (NOT-SURE, NOISE) are false negatives of the
/// true class and false positives of none.
pub fn class_metrics(matrix: &ConfusionMatrix, class: Label) -> Result<ClassMetrics, MetricsError> {
    if matrix.n() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    if matrix.reference_index(class).is_none() {
        return Err(MetricsError::NotReferenceClass(class));
    }
    let tp = matrix.count(class, class);
    let support = matrix.row_sum(class);
    let predicted = matrix.column_sum(class);
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, support);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    Ok(ClassMetrics {
        class,
        precision,
        recall,
        f1,
        support,
        true_positives: tp,
        false_positives: predicted - tp,
        false_negatives: support - tp,
    })
}

/// Support-weighted mean `Σ N_c·m_c / Σ N_c`. An undefined metric on a class
/// with support counts as 0; classes without support carry no weight.
pub fn weighted_avg(per_class: &[ClassMetrics], which: MetricKind) -> Result<f64, MetricsError> {
    let total: u64 = per_class.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(MetricsError::NoSupport);
    }
    let num: f64 = per_class
        .iter()
        .filter(|c| c.support > 0)
        .map(|c| c.support as f64 * c.get(which).unwrap_or(0.0))
        .sum();
    Ok(num / total as f64)
}

/// Diagonal hits over reference classes divided by N.
pub fn accuracy(matrix: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = matrix.n();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let hits: u64 = matrix
        .reference_classes()
        .iter()
        .map(|&c| matrix.count(c, c))
        .sum();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{RATER_CHOICES, REFERENCE_CLASSES};
    use crate::metrics::confusion;
    use Label::*;

    #[test]
    fn nine_one_zero() {
        let m = ConfusionMatrix::from_counts(
            &REFERENCE_CLASSES,
            &REFERENCE_CLASSES,
            vec![vec![9, 0, 0], vec![1, 5, 0], vec![0, 0, 4]],
        )
        .unwrap();
        let c = class_metrics(&m, Afib).unwrap();
        assert_eq!(
            (c.true_positives, c.false_positives, c.false_negatives),
            (9, 1, 0)
        );
        assert!((c.precision.unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(c.recall, Some(1.0));
        assert!((c.f1.unwrap() - 18.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_undefined() {
        let m = confusion(
            &[Afib, Nsr],
            &[Afib, Nsr],
            &REFERENCE_CLASSES,
            &RATER_CHOICES,
        )
        .unwrap();
        let c = class_metrics(&m, Other).unwrap();
        assert_eq!(
            (c.precision, c.recall, c.f1, c.support),
            (None, None, None, 0)
        );
        assert!(class_metrics(&m, NotSure).is_err());
    }

    #[test]
    fn weighted_fixture() {
        let mk = |r: f64, support| ClassMetrics {
            class: Afib,
            precision: None,
            recall: Some(r),
            f1: None,
            support,
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
        };
        let w = weighted_avg(&[mk(1.0, 3), mk(0.5, 1)], MetricKind::Recall).unwrap();
        assert!((w - 0.875).abs() < 1e-15);
        // undefined precision with support counts as 0
        assert_eq!(
            weighted_avg(&[mk(1.0, 3)], MetricKind::Precision).unwrap(),
            0.0
        );
        assert_eq!(
            weighted_avg(&[mk(1.0, 0)], MetricKind::Recall),
            Err(MetricsError::NoSupport)
        );
    }

    #[test]
    fn all_not_sure_scores_zero() {
        let m = confusion(
            &[Afib, Nsr],
            &[NotSure, NotSure],
            &REFERENCE_CLASSES,
            &RATER_CHOICES,
        )
        .unwrap();
        assert_eq!(accuracy(&m).unwrap(), 0.0);
        let empty = confusion(&[], &[], &REFERENCE_CLASSES, &RATER_CHOICES).unwrap();
        assert_eq!(accuracy(&empty), Err(MetricsError::EmptyMatrix));
        assert_eq!(class_metrics(&empty, Afib), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn harmonic_mean_fixture() {
        let f1 = f1_score(1.0, 0.961).unwrap();
        assert!((f1 - 0.980).abs() < 0.0005);
        assert_eq!(f1_score(0.0, 0.0), None);
        assert_eq!(f1_score(0.0, 0.5), Some(0.0));
    }
}
