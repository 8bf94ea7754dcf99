//! Machine-readable output.
//!
//! JSON output is a single envelope `{"schema_version":"1","kind":..,"data":..}`.
//! Floats are written with 17 significant digits (`{:.16e}`) so that parsing
//! the output gives back the same bits; non-finite floats become `null`.
//! CSV output is a header row followed by one row per record, with columns
//! named by dotted JSON paths.

use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected kind {expected:?}, found {found:?}")]
    Kind { expected: String, found: String },
    #[error("unsupported schema version {0:?}")]
    Version(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: String,
    pub kind: String,
    pub data: T,
}

struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(kind: &str, data: &T) -> Result<String, ReportError> {
    let env = Envelope { schema_version: SCHEMA_VERSION.to_string(), kind: kind.to_string(), data };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    env.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, ReportError> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Version(env.schema_version));
    }
    if env.kind != kind {
        return Err(ReportError::Kind { expected: kind.to_string(), found: env.kind });
    }
    Ok(env.data)
}

/// Float cell text, matching the JSON encoding; empty for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(x) if x.is_f64() => fmt_f64(x.as_f64().unwrap_or(f64::NAN)),
        Value::Number(x) => x.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(_) | Value::Object(_) => unreachable!("not a scalar"),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn flatten(key: String, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if key.is_empty() { k.to_string() } else { format!("{key}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(join(k), x, out);
            }
        }
        Value::Array(a) if a.iter().all(is_scalar) => {
            let cells: Vec<String> = a.iter().map(scalar).collect();
            out.push((key, cells.join(" ")));
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(join(&i.to_string()), x, out);
            }
        }
        _ => out.push((if key.is_empty() { "value".to_string() } else { key }, scalar(v))),
    }
}

/// One CSV row per record. Columns are dotted JSON paths, sorted; arrays of
/// scalars are joined with spaces and missing values are empty.
pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String, ReportError> {
    let mut rows = Vec::with_capacity(records.len());
    let mut header: Vec<String> = Vec::new();
    for r in records {
        let mut cells = Vec::new();
        flatten(String::new(), &serde_json::to_value(r)?, &mut cells);
        for (k, _) in &cells {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
        rows.push(cells);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for cells in rows {
        let row = header.iter().map(|h| cells.iter().find(|c| &c.0 == h).map(|c| c.1.as_str()).unwrap_or(""));
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv cells are UTF-8"))
}

/// Header and rows of a CSV document, for reading output back.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}
