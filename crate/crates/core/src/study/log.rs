//! Append-only study log: one JSON record per line,
//! `{"seq":…,"kind":…,"payload":…,"checksum":…}`.
//!
//! The checksum is CRC-32 (hex) over `"{seq}|{kind}|{payload}"` where the
//! payload is serialized with sorted keys. Every append is flushed to disk
//! before the caller acknowledges it.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StudyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
    pub checksum: String,
}

fn checksum(seq: u64, kind: &str, payload: &Value) -> String {
    format!(
        "{:08x}",
        crc32fast::hash(format!("{seq}|{kind}|{payload}").as_bytes())
    )
}

impl LogRecord {
    pub fn new(seq: u64, kind: &str, payload: Value) -> Self {
        Self {
            checksum: checksum(seq, kind, &payload),
            seq,
            kind: kind.to_string(),
            payload,
        }
    }

    fn verify(&self) -> bool {
        self.checksum == checksum(self.seq, &self.kind, &self.payload)
    }
}

/// What recovery found when opening an existing log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recovery {
    pub records: usize,
    pub truncated_lines: usize,
    pub truncated_bytes: u64,
}

pub struct StudyLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

fn io_err(path: &Path, e: std::io::Error) -> StudyError {
    StudyError::Storage(format!("{}: {e}", path.display()))
}

impl StudyLog {
    /// Creates a new, empty log; fails if the file exists.
    pub fn create(path: &Path) -> Result<Self, StudyError> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next_seq: 0,
        })
    }

    /// Opens an existing log and replays it. A damaged tail (every line from
    /// the first bad one onward is unreadable) is cut off with a warning;
    /// damage followed by valid records is an error.
    pub fn open(path: &Path) -> Result<(Self, Vec<LogRecord>, Recovery), StudyError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;

        let mut records = Vec::new();
        let mut good_end = 0usize;
        let mut first_bad: Option<usize> = None;
        let mut pos = 0usize;
        let mut line_no = 0usize;
        while pos < bytes.len() {
            line_no += 1;
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| pos + i);
            let line = &bytes[pos..end.unwrap_or(bytes.len())];
            let next = end.map_or(bytes.len(), |e| e + 1);
            let intact = serde_json::from_slice::<LogRecord>(line)
                .ok()
                .filter(|r| end.is_some() && r.verify());
            match (intact, first_bad) {
                (Some(r), None) if r.seq == records.len() as u64 => {
                    records.push(r);
                    good_end = next;
                }
                (Some(r), None) => {
                    return Err(StudyError::Corrupt(format!(
                        "{}: line {line_no} has seq {} where {} was expected",
                        path.display(),
                        r.seq,
                        records.len()
                    )));
                }
                (Some(_), Some(bad)) => {
                    return Err(StudyError::Corrupt(format!(
                        "{}: line {bad} is damaged but later records are intact",
                        path.display()
                    )));
                }
                (None, None) => first_bad = Some(line_no),
                (None, Some(_)) => {}
            }
            pos = next;
        }

        let mut recovery = Recovery {
            records: records.len(),
            ..Recovery::default()
        };
        if good_end < bytes.len() {
            recovery.truncated_bytes = (bytes.len() - good_end) as u64;
            recovery.truncated_lines = line_no - records.len();
            log::warn!(
                "{}: dropping {} damaged tail line(s), {} bytes",
                path.display(),
                recovery.truncated_lines,
                recovery.truncated_bytes
            );
            file.set_len(good_end as u64).map_err(|e| io_err(path, e))?;
            file.sync_all().map_err(|e| io_err(path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| io_err(path, e))?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                next_seq: records.len() as u64,
            },
            records,
            recovery,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Writes one record and syncs it to disk.
    pub fn append(&mut self, kind: &str, payload: Value) -> Result<LogRecord, StudyError> {
        let record = LogRecord::new(self.next_seq, kind, payload);
        let mut line =
            serde_json::to_vec(&record).map_err(|e| StudyError::Storage(e.to_string()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .map_err(|e| io_err(&self.path, e))?;
        self.file.sync_data().map_err(|e| io_err(&self.path, e))?;
        self.next_seq += 1;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn append_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        let mut log = StudyLog::create(&path).unwrap();
        log.append("a", json!({"x": 1, "b": [1, 2]})).unwrap();
        log.append("b", json!({"y": "z"})).unwrap();
        drop(log);
        let (log, records, rec) = StudyLog::open(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].kind, "b");
        assert_eq!(rec.truncated_lines, 0);
        assert_eq!(log.next_seq(), 2);
        assert!(StudyLog::create(&path).is_err());
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        let mut log = StudyLog::create(&path).unwrap();
        log.append("a", json!({})).unwrap();
        drop(log);
        let good_len = std::fs::metadata(&path).unwrap().len();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":1,\"kind\":\"b\",\"pay").unwrap();
        drop(f);
        let (mut log, records, rec) = StudyLog::open(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(rec.truncated_lines, 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
        log.append("b", json!({})).unwrap();
        drop(log);
        assert_eq!(StudyLog::open(&path).unwrap().1.len(), 2);
    }

    #[test]
    fn damage_before_valid_records_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        let mut log = StudyLog::create(&path).unwrap();
        for i in 0..3 {
            log.append("a", json!({ "i": i })).unwrap();
        }
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("\"i\":1", "\"i\":7", 1)).unwrap();
        assert!(matches!(StudyLog::open(&path), Err(StudyError::Corrupt(_))));
    }
}
