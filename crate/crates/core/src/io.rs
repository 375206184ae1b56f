//! CSV schemas for profiles and sweeps.
//!
//! Numbers are written with nine significant digits in plain decimal
//! notation (scientific only outside `1e-30 ..= 1e15`), so output is
//! byte-identical across runs and platforms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::inference::{SweepRecord, DEFAULT_CENTROID_SIGMA_UM};

pub const PROFILE_HEADER: [&str; 3] = ["beta_deg", "x_um", "intensity_norm"];
pub const SWEEP_HEADER: [&str; 5] = ["beta_deg", "centroid_um", "centroid_sigma_um", "loss_db", "amplification"];

const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("header: {0}")]
    Header(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Formats `x` with `sig` significant digits.
pub fn format_significant(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let exponent: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if !(-30..=15).contains(&exponent) {
        return sci;
    }
    let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
    format!("{:.*}", decimals, x)
}

pub fn format_number(x: f64) -> String {
    format_significant(x, SIGNIFICANT_DIGITS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub beta_deg: f64,
    pub x_um: f64,
    /// Intensity relative to the input peak `I₀`.
    pub intensity_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta_deg: f64,
    pub centroid_um: f64,
    pub centroid_sigma_um: f64,
    pub loss_db: f64,
    pub amplification: f64,
}

impl From<&SweepRow> for SweepRecord {
    fn from(row: &SweepRow) -> Self {
        SweepRecord {
            beta_deg: row.beta_deg,
            centroid_um: row.centroid_um,
            centroid_sigma_um: row.centroid_sigma_um,
            loss_db: Some(row.loss_db),
        }
    }
}

pub fn write_profile_csv<W: Write>(rows: &[ProfileRow], out: W) -> Result<(), SchemaError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_HEADER)?;
    for r in rows {
        w.write_record([format_number(r.beta_deg), format_number(r.x_um), format_number(r.intensity_norm)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), SchemaError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_number(r.beta_deg),
            format_number(r.centroid_um),
            format_number(r.centroid_sigma_um),
            format_number(r.loss_db),
            format_number(r.amplification),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, SchemaError> {
    let raw = record.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| SchemaError::Row {
        line: row_line(record),
        reason: format!("{name}: {raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SchemaError::Row {
            line: row_line(record),
            reason: format!("{name}: {raw:?} is not finite"),
        });
    }
    Ok(v)
}

/// Reads a sweep CSV. `beta_deg` and `centroid_um` are required;
/// `centroid_sigma_um` defaults to one pixel and `loss_db` to absent. Column
/// order is free, unknown columns are rejected.
pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>, SchemaError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if let Some(unknown) = headers.iter().find(|h| !SWEEP_HEADER.contains(&h.trim())) {
        return Err(SchemaError::Header(format!(
            "unknown column {unknown:?}; expected a subset of {}",
            SWEEP_HEADER.join(",")
        )));
    }
    let beta = header_index(&headers, "beta_deg").ok_or_else(|| SchemaError::Header("missing beta_deg".into()))?;
    let centroid =
        header_index(&headers, "centroid_um").ok_or_else(|| SchemaError::Header("missing centroid_um".into()))?;
    let sigma = header_index(&headers, "centroid_sigma_um");
    let loss = header_index(&headers, "loss_db");

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            SchemaError::Row {
                line,
                reason: e.to_string(),
            }
        })?;
        let centroid_sigma_um = match sigma {
            Some(i) => parse_field(&record, i, "centroid_sigma_um")?,
            None => DEFAULT_CENTROID_SIGMA_UM,
        };
        if centroid_sigma_um <= 0.0 {
            return Err(SchemaError::Row {
                line: row_line(&record),
                reason: "centroid_sigma_um must be > 0".into(),
            });
        }
        out.push(SweepRecord {
            beta_deg: parse_field(&record, beta, "beta_deg")?,
            centroid_um: parse_field(&record, centroid, "centroid_um")?,
            centroid_sigma_um,
            loss_db: loss.map(|i| parse_field(&record, i, "loss_db")).transpose()?,
        });
    }
    Ok(out)
}

pub fn read_profile_csv<R: Read>(input: R) -> Result<Vec<ProfileRow>, SchemaError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(PROFILE_HEADER) {
        return Err(SchemaError::Header(format!("expected {}", PROFILE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        out.push(ProfileRow {
            beta_deg: parse_field(&record, 0, "beta_deg")?,
            x_um: parse_field(&record, 1, "x_um")?,
            intensity_norm: parse_field(&record, 2, "intensity_norm")?,
        });
    }
    Ok(out)
}
