//! Dataset manifests: `record_id,path,label` CSV with a required header row.
//!
//! An optional fourth column `sampling_rate_hz` supplies the rate for CSV
//! records, which carry none of their own. WFDB records take it from the header.
//!
//! Training corpora use the same grammar with a `class` column in place of
//! `label`; that column additionally accepts NOISE.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    parse_csv_record, parse_wfdb_header, parse_wfdb_subset, EcgIoError, EcgRecord, Result,
};
use crate::label::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub record_id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub sampling_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestKind {
    /// `label` column, reference classes only.
    Reference,
    /// `class` column, any classifier output class.
    Training,
}

impl ManifestKind {
    fn column(self) -> &'static str {
        match self {
            ManifestKind::Reference => "label",
            ManifestKind::Training => "class",
        }
    }

    fn accepts(self, label: Label) -> bool {
        match self {
            ManifestKind::Reference => label.is_reference(),
            ManifestKind::Training => label.model_index().is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub kind: ManifestKind,
    pub entries: Vec<ManifestEntry>,
    /// Directory the entry paths are resolved against.
    pub base_dir: PathBuf,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| EcgIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &name, &base_dir)
}

pub fn parse_manifest(text: &str, dataset_name: &str, base_dir: &Path) -> Result<DatasetManifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, header) = lines.next().ok_or(EcgIoError::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let (kind, with_rate) = match columns.as_slice() {
        ["record_id", "path", "label"] => (ManifestKind::Reference, false),
        ["record_id", "path", "label", "sampling_rate_hz"] => (ManifestKind::Reference, true),
        ["record_id", "path", "class"] => (ManifestKind::Training, false),
        ["record_id", "path", "class", "sampling_rate_hz"] => (ManifestKind::Training, true),
        _ => {
            return Err(EcgIoError::Parse {
                line: 1,
                message: format!("expected header `record_id,path,label`, found `{header}`"),
            })
        }
    };

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(EcgIoError::RaggedRow {
                line,
                expected: columns.len(),
                found: cells.len(),
            });
        }
        let record_id = cells[0];
        if record_id.is_empty() || cells[1].is_empty() {
            return Err(EcgIoError::Parse {
                line,
                message: "empty record id or path".into(),
            });
        }
        let label = cells[2]
            .parse::<Label>()
            .ok()
            .filter(|&l| kind.accepts(l))
            .ok_or_else(|| EcgIoError::UnknownLabel {
                line,
                token: cells[2].to_string(),
            })?;
        let sampling_rate_hz = if with_rate && !cells[3].is_empty() {
            let fs: f64 = cells[3].parse().map_err(|_| EcgIoError::BadCell {
                line,
                column: 4,
                value: cells[3].to_string(),
            })?;
            if !(fs.is_finite() && fs > 0.0) {
                return Err(EcgIoError::BadCell {
                    line,
                    column: 4,
                    value: cells[3].to_string(),
                });
            }
            Some(fs)
        } else {
            None
        };
        if !seen.insert(record_id.to_string()) {
            return Err(EcgIoError::DuplicateRecord(record_id.to_string()));
        }
        entries.push(ManifestEntry {
            record_id: record_id.to_string(),
            path: PathBuf::from(cells[1]),
            label,
            sampling_rate_hz,
        });
    }

    Ok(DatasetManifest {
        dataset_name: dataset_name.to_string(),
        kind,
        entries,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn write_manifest(kind: ManifestKind, entries: &[ManifestEntry]) -> String {
    let with_rate = entries.iter().any(|e| e.sampling_rate_hz.is_some());
    let mut out = format!("record_id,path,{}", kind.column());
    out.push_str(if with_rate {
        ",sampling_rate_hz\n"
    } else {
        "\n"
    });
    for e in entries {
        out.push_str(&format!("{},{},{}", e.record_id, e.path.display(), e.label));
        if with_rate {
            out.push(',');
            if let Some(fs) = e.sampling_rate_hz {
                out.push_str(&fs.to_string());
            }
        }
        out.push('\n');
    }
    out
}

impl DatasetManifest {
    /// Loads and validates one entry; a reference-class label becomes the
    /// record's reference label.
    pub fn load_record(&self, entry: &ManifestEntry) -> Result<EcgRecord> {
        let path = self.base_dir.join(&entry.path);
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let record = match ext {
            "hea" => {
                let header_text = read_to_string(&path)?;
                let header = parse_wfdb_header(&header_text)?;
                let dir = path.parent().unwrap_or(Path::new(""));
                let dat_path = dir.join(&header.leads[0].file);
                if header.leads.iter().any(|l| l.file != header.leads[0].file) {
                    return Err(EcgIoError::InvalidRecord(format!(
                        "{}: leads span several signal files",
                        path.display()
                    )));
                }
                let dat = fs::read(&dat_path).map_err(|source| EcgIoError::Io {
                    path: dat_path.clone(),
                    source,
                })?;
                parse_wfdb_subset(&header_text, &dat)?
            }
            "csv" => {
                let fs = entry.sampling_rate_hz.ok_or_else(|| {
                    EcgIoError::InvalidRecord(format!(
                        "{}: CSV records need a sampling_rate_hz manifest column",
                        entry.record_id
                    ))
                })?;
                parse_csv_record(&entry.record_id, &read_to_string(&path)?, fs)?
            }
            other => {
                return Err(EcgIoError::InvalidRecord(format!(
                    "{}: unrecognised record extension `{other}`",
                    path.display()
                )))
            }
        };
        let record = if record.record_id() == entry.record_id {
            record
        } else {
            EcgRecord::new(
                entry.record_id.clone(),
                record.sampling_rate_hz(),
                record.lead_names().to_vec(),
                record.samples().to_vec(),
                None,
            )?
        };
        record.with_reference_label(entry.label.is_reference().then_some(entry.label))
    }

    pub fn load_records(&self) -> Result<Vec<EcgRecord>> {
        self.entries.iter().map(|e| self.load_record(e)).collect()
    }
}
