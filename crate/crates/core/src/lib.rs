//! Lead-I ECG rhythm classification and blinded reader-study evaluation.
//!
//! The pipeline runs segmentation, a Morlet continuous wavelet scalogram and
//! a small DenseNet-style CNN over four classes (NSR, AFIB, OTHER, NOISE).
//! The study side collects blinded rater annotations and scores raters and
//! the model against reference labels with precision/recall/F1, weighted
//! averages, Cohen's kappa with confidence intervals, ROC/AUC and pairwise
//! rater agreement.

pub mod cli;
pub mod densenet;
pub mod desk;
pub mod ecg_io;
pub mod label;
pub mod metrics;
pub mod preprocess;
pub mod scalogram;
pub mod study;

pub use label::Label;
