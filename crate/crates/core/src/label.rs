//! Rhythm label vocabulary shared by the pipeline, the metrics and the study service.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A rhythm class, a rater choice, or a model output class.
///
/// Reference annotations only ever use [`Label::Afib`], [`Label::Nsr`] and
/// [`Label::Other`]. Human raters may additionally answer [`Label::NotSure`];
/// the classifier may additionally answer [`Label::Noise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AFIB")]
    Afib,
    #[serde(rename = "NSR")]
    Nsr,
    #[serde(rename = "OTHER")]
    Other,
    #[serde(rename = "NOT-SURE")]
    NotSure,
    #[serde(rename = "NOISE")]
    Noise,
}

/// Reference classes in report order.
pub const REFERENCE_CLASSES: [Label; 3] = [Label::Afib, Label::Nsr, Label::Other];

/// Choices offered to human raters.
pub const RATER_CHOICES: [Label; 4] = [Label::Afib, Label::Nsr, Label::Other, Label::NotSure];

/// Classifier output order (index of the softmax output).
pub const MODEL_CLASSES: [Label; 4] = [Label::Nsr, Label::Afib, Label::Other, Label::Noise];

/// Every label, in canonical report order.
pub const ALL_LABELS: [Label; 5] = [
    Label::Afib,
    Label::Nsr,
    Label::Other,
    Label::NotSure,
    Label::Noise,
];

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Afib => "AFIB",
            Label::Nsr => "NSR",
            Label::Other => "OTHER",
            Label::NotSure => "NOT-SURE",
            Label::Noise => "NOISE",
        }
    }

    pub fn is_reference(self) -> bool {
        REFERENCE_CLASSES.contains(&self)
    }

    /// Position of this label in the classifier output, if it is a model class.
    pub fn model_index(self) -> Option<usize> {
        MODEL_CLASSES.iter().position(|&l| l == self)
    }

    pub fn from_model_index(index: usize) -> Option<Label> {
        MODEL_CLASSES.get(index).copied()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_LABELS
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        for label in ALL_LABELS {
            assert_eq!(label.as_str().parse::<Label>().unwrap(), label);
            let json = serde_json::to_string(&label).unwrap();
            assert_eq!(json, format!("\"{}\"", label.as_str()));
        }
        assert!("MAYBE".parse::<Label>().is_err());
        assert!("afib".parse::<Label>().is_err());
    }

    #[test]
    fn model_indices() {
        assert_eq!(Label::Nsr.model_index(), Some(0));
        assert_eq!(Label::Noise.model_index(), Some(3));
        assert_eq!(Label::NotSure.model_index(), None);
        assert_eq!(Label::from_model_index(1), Some(Label::Afib));
    }
}
