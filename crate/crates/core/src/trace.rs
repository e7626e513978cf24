//! Trace export and import.
//!
//! CSV traces have one row per tick. Column order, format version 1:
//!
//! ```text
//! t,
//! q_h_x,q_h_y,q_h_z, q_m_x,q_m_y,q_m_z, q_ref_x,q_ref_y,q_ref_z,
//! theta_0..theta_5, theta_ref_0..theta_ref_5,
//! tip_x,tip_y,tip_z, contact_tip_x,contact_tip_y,contact_tip_z,
//! d_e, alpha,
//! f_fixture_x,f_fixture_y,f_fixture_z, f_field_x,f_field_y,f_field_z,
//! f_total_x,f_total_y,f_total_z,
//! contact
//! ```
//!
//! Floats are written in shortest round-trip form, so the same trace always
//! produces the same bytes. JSON traces wrap the full [`EpisodeResult`] with a
//! `format_version` field.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EpisodeResult, SimState};
use crate::error::{Error, Result};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(Error::config(format!(
                "unknown trace format '{other}' (expected csv|json)"
            ))),
        }
    }
}

pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for v in ["q_h", "q_m", "q_ref"] {
        cols.extend(["x", "y", "z"].map(|c| format!("{v}_{c}")));
    }
    for v in ["theta", "theta_ref"] {
        cols.extend((0..6).map(|i| format!("{v}_{i}")));
    }
    for v in ["tip", "contact_tip"] {
        cols.extend(["x", "y", "z"].map(|c| format!("{v}_{c}")));
    }
    cols.push("d_e".into());
    cols.push("alpha".into());
    for v in ["f_fixture", "f_field", "f_total"] {
        cols.extend(["x", "y", "z"].map(|c| format!("{v}_{c}")));
    }
    cols.push("contact".into());
    cols
}

fn csv_row(s: &SimState) -> Vec<String> {
    let mut row = Vec::with_capacity(44);
    row.push(s.t.to_string());
    for v in [s.q_h, s.q_m, s.q_ref] {
        row.extend(v.iter().map(f64::to_string));
    }
    row.extend(s.theta.iter().chain(s.theta_ref.iter()).map(f64::to_string));
    for v in [s.tip, s.contact_tip] {
        row.extend(v.iter().map(f64::to_string));
    }
    row.push(s.d_e.to_string());
    row.push(s.alpha.to_string());
    for v in [s.f_fixture, s.f_field, s.f_total] {
        row.extend(v.iter().map(f64::to_string));
    }
    row.push(s.contact.as_str().to_string());
    row
}

pub fn write_trace_csv<W: Write>(trace: &[SimState], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for s in trace {
        w.write_record(csv_row(s))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceFileRef<'a> {
    format_version: u32,
    result: &'a EpisodeResult,
}

#[derive(Deserialize)]
struct TraceFile {
    format_version: u32,
    result: EpisodeResult,
}

pub fn write_trace_json<W: Write>(result: &EpisodeResult, out: W) -> serde_json::Result<()> {
    let file = TraceFileRef {
        format_version: TRACE_FORMAT_VERSION,
        result,
    };
    serde_json::to_writer(out, &file)
}

pub fn export_trace(result: &EpisodeResult, format: TraceFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        TraceFormat::Csv => write_trace_csv(&result.trace, &mut out).map_err(|e| format_error(path, e))?,
        TraceFormat::Json => write_trace_json(result, &mut out).map_err(|e| format_error(path, e))?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_trace_json(path: &Path) -> Result<EpisodeResult> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed: TraceFile = serde_json::from_reader(BufReader::new(file)).map_err(|e| format_error(path, e))?;
    if parsed.format_version != TRACE_FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "unsupported trace format version {} (expected {TRACE_FORMAT_VERSION})",
                parsed.format_version
            ),
        });
    }
    Ok(parsed.result)
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
