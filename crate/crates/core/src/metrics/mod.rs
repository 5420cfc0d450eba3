//! Agreement statistics for reader studies: confusion matrices over
//! asymmetric label sets, per-class precision/recall/F1, support-weighted
//! averages, accuracy, Cohen's kappa with a normal-approximation interval,
//! one-vs-rest ROC/AUC and pairwise rater agreement.

mod classes;
mod confusion;
mod kappa;
mod pairwise;
mod roc;

pub use classes::{accuracy, class_metrics, f1_score, weighted_avg, ClassMetrics, MetricKind};
pub use confusion::{confusion, ConfusionMatrix};
pub use kappa::{
    cohen_kappa, interpret_kappa, kappa_ci, kappa_from_counts, KappaBand, KappaResult, Z_95,
};
pub use pairwise::{pairwise_agreement, PairwiseAgreement};
pub use roc::{roc_auc, roc_binary, RocCurve, RocTarget};

use crate::label::Label;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} is not in the declared {side} order")]
    UnknownLabel { label: Label, side: &'static str },
    #[error("invalid class order: {0}")]
    InvalidOrder(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("{0} is not a reference class of this matrix")]
    NotReferenceClass(Label),
    #[error("no class has positive support")]
    NoSupport,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateAgreement,
    #[error("AUC for {target} is undefined with {positives} positives and {negatives} negatives")]
    UndefinedAuc {
        target: String,
        positives: usize,
        negatives: usize,
    },
    #[error("score {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("need at least 2 raters, got {0}")]
    TooFewRaters(usize),
}
