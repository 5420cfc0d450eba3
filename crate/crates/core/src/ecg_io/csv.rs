use super::{EcgIoError, EcgRecord, Result};

/// Parses a CSV record: first row lead names, then one row of microvolt values per sample.
pub fn parse_csv_record(record_id: &str, text: &str, sampling_rate_hz: f64) -> Result<EcgRecord> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, header) = lines.next().ok_or(EcgIoError::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    let lead_names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if lead_names.iter().any(|n| n.is_empty()) {
        return Err(EcgIoError::Parse {
            line: 1,
            message: "empty lead name in header".into(),
        });
    }

    let mut samples = vec![Vec::new(); lead_names.len()];
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != lead_names.len() {
            return Err(EcgIoError::RaggedRow {
                line,
                expected: lead_names.len(),
                found: cells.len(),
            });
        }
        for (column, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| EcgIoError::BadCell {
                line,
                column: column + 1,
                value: cell.trim().to_string(),
            })?;
            if !value.is_finite() {
                return Err(EcgIoError::BadCell {
                    line,
                    column: column + 1,
                    value: cell.trim().to_string(),
                });
            }
            samples[column].push(value);
        }
    }
    EcgRecord::new(record_id, sampling_rate_hz, lead_names, samples, None)
}

pub fn write_csv_record(record: &EcgRecord) -> String {
    let mut out = record.lead_names().join(",");
    out.push('\n');
    for i in 0..record.sample_count() {
        let row: Vec<String> = record.samples().iter().map(|l| l[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
