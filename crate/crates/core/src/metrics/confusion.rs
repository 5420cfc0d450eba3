use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::label::Label;

/// Counts of (reference, predicted) pairs. Rows follow `reference_classes`,
/// columns follow `predicted_classes`, which starts with the reference
/// classes and may append extra answers such as NOT-SURE or NOISE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    reference_classes: Vec<Label>,
    predicted_classes: Vec<Label>,
    counts: Vec<Vec<u64>>,
}

fn check_order(order: &[Label], side: &str) -> Result<(), MetricsError> {
    if order.is_empty() {
        return Err(MetricsError::InvalidOrder(format!("{side} order is empty")));
    }
    for (i, l) in order.iter().enumerate() {
        if order[..i].contains(l) {
            return Err(MetricsError::InvalidOrder(format!(
                "{l} repeated in {side} order"
            )));
        }
    }
    Ok(())
}

impl ConfusionMatrix {
    /// Matrix from explicit counts; `counts` is `|reference| × |predicted|`.
    pub fn from_counts(
        reference_classes: &[Label],
        predicted_classes: &[Label],
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, MetricsError> {
        check_order(reference_classes, "reference")?;
        check_order(predicted_classes, "predicted")?;
        if let Some(missing) = reference_classes
            .iter()
            .find(|l| !predicted_classes.contains(l))
        {
            return Err(MetricsError::InvalidOrder(format!(
                "predicted order lacks reference class {missing}"
            )));
        }
        if counts.len() != reference_classes.len() {
            return Err(MetricsError::LengthMismatch {
                left: counts.len(),
                right: reference_classes.len(),
            });
        }
        if let Some(row) = counts.iter().find(|r| r.len() != predicted_classes.len()) {
            return Err(MetricsError::LengthMismatch {
                left: row.len(),
                right: predicted_classes.len(),
            });
        }
        Ok(Self {
            reference_classes: reference_classes.to_vec(),
            predicted_classes: predicted_classes.to_vec(),
            counts,
        })
    }

    pub fn reference_classes(&self) -> &[Label] {
        &self.reference_classes
    }

    pub fn predicted_classes(&self) -> &[Label] {
        &self.predicted_classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, reference: Label, predicted: Label) -> u64 {
        match (
            self.reference_index(reference),
            self.predicted_index(predicted),
        ) {
            (Some(r), Some(p)) => self.counts[r][p],
            _ => 0,
        }
    }

    pub fn reference_index(&self, label: Label) -> Option<usize> {
        self.reference_classes.iter().position(|&l| l == label)
    }

    pub fn predicted_index(&self, label: Label) -> Option<usize> {
        self.predicted_classes.iter().position(|&l| l == label)
    }

    pub fn row_sum(&self, reference: Label) -> u64 {
        self.reference_index(reference)
            .map_or(0, |r| self.counts[r].iter().sum())
    }

    /// Column sum over reference rows.
    pub fn column_sum(&self, predicted: Label) -> u64 {
        self.predicted_index(predicted)
            .map_or(0, |p| self.counts.iter().map(|row| row[p]).sum())
    }
}

/// Tallies aligned reference/predicted label lists.
pub fn confusion(
    ref_labels: &[Label],
    pred_labels: &[Label],
    ref_order: &[Label],
    pred_order: &[Label],
) -> Result<ConfusionMatrix, MetricsError> {
    if ref_labels.len() != pred_labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: ref_labels.len(),
            right: pred_labels.len(),
        });
    }
    let mut m = ConfusionMatrix::from_counts(
        ref_order,
        pred_order,
        vec![vec![0; pred_order.len()]; ref_order.len()],
    )?;
    for (&r, &p) in ref_labels.iter().zip(pred_labels) {
        let ri = m.reference_index(r).ok_or(MetricsError::UnknownLabel {
            label: r,
            side: "reference",
        })?;
        let pi = m.predicted_index(p).ok_or(MetricsError::UnknownLabel {
            label: p,
            side: "predicted",
        })?;
        m.counts[ri][pi] += 1;
    }
    Ok(m)
}
