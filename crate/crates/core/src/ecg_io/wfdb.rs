//! A WFDB subset: one header, one signal file, format 16 only.
//!
//! Header grammar:
//!
//! ```text
//! <name> <n_leads> <fs> <n_samples>
//! <file> 16 <gain> <baseline> <lead_name>      (one line per lead)
//! ```
//!
//! Lines starting with `#` are comments; `#label <AFIB|NSR|OTHER>` carries the
//! reference label. Gain is in raw units per millivolt. The signal file is
//! little-endian two's complement 16-bit, interleaved by lead.

use super::{EcgIoError, EcgRecord, Result};
use crate::label::Label;

const LABEL_COMMENT: &str = "#label";

#[derive(Debug, Clone, PartialEq)]
pub struct WfdbLead {
    pub file: String,
    pub gain: f64,
    pub baseline: i32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfdbHeader {
    pub name: String,
    pub sampling_rate_hz: f64,
    pub n_samples: usize,
    pub leads: Vec<WfdbLead>,
    pub label: Option<Label>,
}

fn parse_err(line: usize, message: impl Into<String>) -> EcgIoError {
    EcgIoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_wfdb_header(text: &str) -> Result<WfdbHeader> {
    let mut record_line: Option<(usize, Vec<&str>)> = None;
    let mut lead_lines = Vec::new();
    let mut label = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(LABEL_COMMENT) {
            let token = rest.trim();
            let parsed: Label = token
                .parse()
                .map_err(|_| parse_err(line_no, format!("unknown label `{token}`")))?;
            if !parsed.is_reference() {
                return Err(EcgIoError::UnknownLabel {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            label = Some(parsed);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if record_line.is_none() {
            record_line = Some((line_no, fields));
        } else {
            lead_lines.push((line_no, fields));
        }
    }

    let (line_no, fields) = record_line.ok_or_else(|| parse_err(1, "empty header"))?;
    if fields.len() != 4 {
        return Err(parse_err(
            line_no,
            format!(
                "record line needs `name n_leads fs n_samples`, found {} fields",
                fields.len()
            ),
        ));
    }
    let name = fields[0].to_string();
    let n_leads: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(line_no, format!("bad lead count `{}`", fields[1])))?;
    let sampling_rate_hz: f64 = fields[2]
        .parse()
        .map_err(|_| parse_err(line_no, format!("bad sampling rate `{}`", fields[2])))?;
    if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
        return Err(parse_err(line_no, "sampling rate must be positive"));
    }
    let n_samples: usize = fields[3]
        .parse()
        .map_err(|_| parse_err(line_no, format!("bad sample count `{}`", fields[3])))?;
    if n_leads == 0 {
        return Err(parse_err(line_no, "record declares no leads"));
    }
    if n_samples == 0 {
        return Err(parse_err(line_no, "record declares no samples"));
    }
    if lead_lines.len() != n_leads {
        let line = lead_lines.last().map_or(line_no, |(l, _)| *l);
        return Err(parse_err(
            line,
            format!(
                "header declares {n_leads} leads, found {} lead lines",
                lead_lines.len()
            ),
        ));
    }

    let mut leads = Vec::with_capacity(n_leads);
    for (line_no, fields) in lead_lines {
        if fields.len() != 5 {
            return Err(parse_err(
                line_no,
                format!(
                    "lead line needs `file format gain baseline lead_name`, found {} fields",
                    fields.len()
                ),
            ));
        }
        match fields[1].parse::<u32>() {
            Ok(16) => {}
            Ok(_) => return Err(EcgIoError::UnsupportedFormat(fields[1].to_string())),
            Err(_) => return Err(parse_err(line_no, format!("bad format `{}`", fields[1]))),
        }
        let gain: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad gain `{}`", fields[2])))?;
        if !(gain.is_finite() && gain > 0.0) {
            return Err(parse_err(line_no, "gain must be positive"));
        }
        let baseline: i32 = fields[3]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad baseline `{}`", fields[3])))?;
        leads.push(WfdbLead {
            file: fields[0].to_string(),
            gain,
            baseline,
            name: fields[4].to_string(),
        });
    }

    Ok(WfdbHeader {
        name,
        sampling_rate_hz,
        n_samples,
        leads,
        label,
    })
}

/// Decodes interleaved format-16 bytes into per-lead raw integers.
pub fn decode_format16(dat: &[u8], n_leads: usize, n_samples: usize) -> Result<Vec<Vec<i16>>> {
    let expected = 2 * n_leads * n_samples;
    if dat.len() != expected {
        return Err(EcgIoError::Truncated {
            expected,
            actual: dat.len(),
        });
    }
    let mut leads = vec![Vec::with_capacity(n_samples); n_leads];
    for (i, pair) in dat.chunks_exact(2).enumerate() {
        leads[i % n_leads].push(i16::from_le_bytes([pair[0], pair[1]]));
    }
    Ok(leads)
}

pub fn parse_wfdb_subset(header_text: &str, dat_bytes: &[u8]) -> Result<EcgRecord> {
    let header = parse_wfdb_header(header_text)?;
    let raw = decode_format16(dat_bytes, header.leads.len(), header.n_samples)?;
    let samples = raw
        .iter()
        .zip(&header.leads)
        .map(|(values, lead)| {
            values
                .iter()
                .map(|&r| (f64::from(r) - f64::from(lead.baseline)) / lead.gain * 1000.0)
                .collect()
        })
        .collect();
    let names = header.leads.iter().map(|l| l.name.clone()).collect();
    EcgRecord::new(
        header.name,
        header.sampling_rate_hz,
        names,
        samples,
        header.label,
    )
}

/// Quantizes a record at `gain` raw units per millivolt with zero baseline.
///
/// Returns the header text and the signal bytes.
pub fn write_wfdb_subset(record: &EcgRecord, gain: f64) -> Result<(String, Vec<u8>)> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(EcgIoError::InvalidRecord(format!(
            "gain must be positive, got {gain}"
        )));
    }
    let name = record.record_id();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(EcgIoError::InvalidRecord(format!(
            "record id `{name}` cannot be written into a header"
        )));
    }
    let n = record.sample_count();
    let n_leads = record.n_leads();

    let mut raw = vec![0i16; n * n_leads];
    for (li, lead) in record.samples().iter().enumerate() {
        for (si, &uv) in lead.iter().enumerate() {
            let q = (uv * gain / 1000.0).round();
            if !q.is_finite() || q < f64::from(i16::MIN) || q > f64::from(i16::MAX) {
                return Err(EcgIoError::Range {
                    lead: record.lead_names()[li].clone(),
                    sample: si,
                    value: uv,
                });
            }
            raw[si * n_leads + li] = q as i16;
        }
    }
    let dat: Vec<u8> = raw.iter().flat_map(|v| v.to_le_bytes()).collect();

    let mut header = format!("{name} {n_leads} {} {n}\n", record.sampling_rate_hz());
    for lead in record.lead_names() {
        header.push_str(&format!("{name}.dat 16 {gain} 0 {lead}\n"));
    }
    if let Some(label) = record.reference_label() {
        header.push_str(&format!("{LABEL_COMMENT} {label}\n"));
    }
    Ok((header, dat))
}
