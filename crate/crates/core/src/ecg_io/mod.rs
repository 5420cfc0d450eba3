//! ECG record ingestion: a WFDB format-16 subset, a plain CSV form and
//! dataset manifests.

mod csv;
mod manifest;
mod record;
mod wfdb;

use std::path::PathBuf;

pub use self::csv::{parse_csv_record, write_csv_record};
pub use manifest::{
    load_manifest, parse_manifest, write_manifest, DatasetManifest, ManifestEntry, ManifestKind,
};
pub use record::{EcgRecord, TWELVE_LEAD_ORDER};
pub use wfdb::{
    decode_format16, parse_wfdb_header, parse_wfdb_subset, write_wfdb_subset, WfdbHeader, WfdbLead,
};

#[derive(Debug, thiserror::Error)]
pub enum EcgIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("signal file holds {actual} bytes, header requires {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("unsupported signal format `{0}` (only format 16 is read)")]
    UnsupportedFormat(String),
    #[error("line {line}: row has {found} values, header declares {expected} leads")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: `{value}` is not a number")]
    BadCell {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("lead {lead} sample {sample}: {value} does not fit a signed 16-bit sample")]
    Range {
        lead: String,
        sample: usize,
        value: f64,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("duplicate record id `{0}`")]
    DuplicateRecord(String),
    #[error("line {line}: label `{token}` is not a reference class (AFIB, NSR, OTHER)")]
    UnknownLabel { line: usize, token: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = EcgIoError> = std::result::Result<T, E>;
