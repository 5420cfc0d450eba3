use serde::{Deserialize, Serialize};

use super::{cohen_kappa, confusion, ConfusionMatrix, KappaResult, MetricsError};
use crate::label::{Label, ALL_LABELS, RATER_CHOICES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub rater_a: String,
    pub rater_b: String,
    /// Rows: `rater_a`, columns: `rater_b`.
    pub matrix: ConfusionMatrix,
    /// `None` when chance agreement is 1 (both raters gave one answer only).
    pub kappa: Option<KappaResult>,
}

/// Agreement for every unordered rater pair, in input order
/// ((0,1), (0,2), …, (1,2), …). Label lists must be aligned item by item.
pub fn pairwise_agreement(
    annotations: &[(String, Vec<Label>)],
) -> Result<Vec<PairwiseAgreement>, MetricsError> {
    if annotations.len() < 2 {
        return Err(MetricsError::TooFewRaters(annotations.len()));
    }
    let n = annotations[0].1.len();
    if let Some((_, l)) = annotations.iter().find(|(_, l)| l.len() != n) {
        return Err(MetricsError::LengthMismatch {
            left: l.len(),
            right: n,
        });
    }
    let order: Vec<Label> = ALL_LABELS
        .iter()
        .copied()
        .filter(|l| RATER_CHOICES.contains(l) || annotations.iter().any(|(_, v)| v.contains(l)))
        .collect();
    let mut out = Vec::new();
    for i in 0..annotations.len() {
        for j in i + 1..annotations.len() {
            let (a, la) = &annotations[i];
            let (b, lb) = &annotations[j];
            let matrix = confusion(la, lb, &order, &order)?;
            let kappa = match cohen_kappa(la, lb) {
                Ok(k) => Some(k),
                Err(MetricsError::DegenerateAgreement | MetricsError::EmptyMatrix) => None,
                Err(e) => return Err(e),
            };
            out.push(PairwiseAgreement {
                rater_a: a.clone(),
                rater_b: b.clone(),
                matrix,
                kappa,
            });
        }
    }
    Ok(out)
}
