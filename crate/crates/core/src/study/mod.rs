//! Blinded reader studies: an append-only log per study, rater sessions,
//! model runs as a pseudo-rater, comparison reports and the HTTP API.

pub mod http;
mod log;
mod report;
mod service;
mod state;

pub use self::log::{LogRecord, Recovery, StudyLog};
pub use report::{
    build_report, AgreementReport, AverageRow, ExcludedRater, ModelSection, RaterRow, Weighted,
};
pub use service::{
    hash_token, items_from_manifest, rater_seed, Ack, BlindedItem, CreatedStudy, DisplayHints,
    ItemSource, ModelRunSummary, NewStudy, NextItem, RaterToken, StudyService,
};
pub use state::{
    Annotation, Event, ItemFailure, ModelResult, ModelRun, RaterEntry, Source, Study, StudyCreated,
    StudyItem, Unlock,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unauthorized: {0}")]
    Auth(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("corrupt study log: {0}")]
    Corrupt(String),
    #[error("nothing to report: no complete rater and no model run")]
    EmptyReport,
}
