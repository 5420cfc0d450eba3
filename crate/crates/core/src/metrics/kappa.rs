use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MetricsError;
use crate::label::{Label, ALL_LABELS};

/// Two-sided 95 % normal quantile used for the interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaBand {
    None,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Slight => "slight",
            Self::Fair => "fair",
            Self::Moderate => "moderate",
            Self::Substantial => "substantial",
            Self::AlmostPerfect => "almost-perfect",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub pr_a: f64,
    pub pr_e: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band: KappaBand,
    /// Two-sided Wald p-value for κ = 0 using `se`; `None` when `se` is 0.
    pub p_value: Option<f64>,
    pub n: u64,
}

/// Landis–Koch style bands, each closed at its upper end.
pub fn interpret_kappa(kappa: f64) -> KappaBand {
    match kappa {
        k if k <= 0.0 => KappaBand::None,
        k if k <= 0.20 => KappaBand::Slight,
        k if k <= 0.40 => KappaBand::Fair,
        k if k <= 0.60 => KappaBand::Moderate,
        k if k <= 0.80 => KappaBand::Substantial,
        _ => KappaBand::AlmostPerfect,
    }
}

/// `κ ± 1.96·SE`, clamped to [−1, 1].
pub fn kappa_ci(kappa: f64, se: f64) -> (f64, f64) {
    ((kappa - Z_95 * se).max(-1.0), (kappa + Z_95 * se).min(1.0))
}

fn wald_p_value(kappa: f64, se: f64) -> Option<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (se > 0.0).then(|| 2.0 * (1.0 - std_normal.cdf((kappa / se).abs())))
}

/// Kappa for a square count matrix (rows: first rater, columns: second).
pub fn kappa_from_counts(counts: &[Vec<u64>]) -> Result<KappaResult, MetricsError> {
    let k = counts.len();
    if let Some(row) = counts.iter().find(|r| r.len() != k) {
        return Err(MetricsError::LengthMismatch {
            left: row.len(),
            right: k,
        });
    }
    let n: u64 = counts.iter().flatten().sum();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let nf = n as f64;
    let diag: u64 = (0..k).map(|i| counts[i][i]).sum();
    let pr_a = diag as f64 / nf;
    let pr_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = counts[i].iter().sum();
            let col: u64 = counts.iter().map(|r| r[i]).sum();
            (row as f64 / nf) * (col as f64 / nf)
        })
        .sum();
    if pr_e >= 1.0 {
        return Err(MetricsError::DegenerateAgreement);
    }
    let kappa = (pr_a - pr_e) / (1.0 - pr_e);
    let se = (pr_a * (1.0 - pr_a) / (nf * (1.0 - pr_e).powi(2))).sqrt();
    let (ci_low, ci_high) = kappa_ci(kappa, se);
    Ok(KappaResult {
        kappa,
        pr_a,
        pr_e,
        se,
        ci_low,
        ci_high,
        band: interpret_kappa(kappa),
        p_value: wald_p_value(kappa, se),
        n,
    })
}

/// Cohen's kappa over the union of labels observed on either side.
pub fn cohen_kappa(
    ref_labels: &[Label],
    pred_labels: &[Label],
) -> Result<KappaResult, MetricsError> {
    if ref_labels.len() != pred_labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: ref_labels.len(),
            right: pred_labels.len(),
        });
    }
    if ref_labels.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let classes: Vec<Label> = ALL_LABELS
        .iter()
        .copied()
        .filter(|l| ref_labels.contains(l) || pred_labels.contains(l))
        .collect();
    let idx = |l: Label| {
        classes
            .iter()
            .position(|&c| c == l)
            .expect("observed label")
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (&a, &b) in ref_labels.iter().zip(pred_labels) {
        counts[idx(a)][idx(b)] += 1;
    }
    kappa_from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn two_by_two_fixture() {
        let k = kappa_from_counts(&[vec![2, 1], vec![1, 2]]).unwrap();
        assert!((k.pr_a - 2.0 / 3.0).abs() < 1e-15);
        assert!((k.pr_e - 0.5).abs() < 1e-15);
        assert!((k.kappa - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.band, KappaBand::Fair);
        // SE = √((2/9)/(6·¼)) = 0.3849, z = √3/2, two-sided p = 0.386476
        assert!((k.se - 0.384_900_179_459_750_5).abs() < 1e-15);
        assert!((k.p_value.unwrap() - 0.386_476_230_771).abs() < 1e-9);
    }

    #[test]
    fn perfect_agreement() {
        let l = [Afib, Nsr, Other, Nsr];
        let k = cohen_kappa(&l, &l).unwrap();
        assert_eq!(k.kappa, 1.0);
        assert_eq!(k.se, 0.0);
        assert_eq!(k.band, KappaBand::AlmostPerfect);
    }

    #[test]
    fn degenerate() {
        assert_eq!(
            cohen_kappa(&[Nsr, Nsr], &[Nsr, Nsr]),
            Err(MetricsError::DegenerateAgreement)
        );
        assert_eq!(cohen_kappa(&[], &[]), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn bands() {
        assert_eq!(interpret_kappa(0.87), KappaBand::AlmostPerfect);
        assert_eq!(interpret_kappa(0.0), KappaBand::None);
        assert_eq!(interpret_kappa(-0.3), KappaBand::None);
        assert_eq!(interpret_kappa(0.35), KappaBand::Fair);
        assert_eq!(interpret_kappa(0.47), KappaBand::Moderate);
        assert_eq!(interpret_kappa(0.20), KappaBand::Slight);
        assert_eq!(interpret_kappa(0.81), KappaBand::AlmostPerfect);
        assert_eq!(interpret_kappa(0.80), KappaBand::Substantial);
        assert_eq!(KappaBand::AlmostPerfect.to_string(), "almost-perfect");
    }

    #[test]
    fn interval_is_clamped() {
        assert_eq!(kappa_ci(0.99, 0.1), (0.99 - 0.196, 1.0));
        let (lo, hi) = kappa_ci(0.47, 0.039);
        assert!((lo - 0.393_56).abs() < 1e-12 && (hi - 0.546_44).abs() < 1e-12);
    }
}
