//! Tables written as CSV or JSON lines with a fixed column order.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Missing, Into::into)
    }
}

/// Seventeen significant digits, enough to recover the exact f64.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(x) => match Number::from_f64(*x) {
                Some(n) => serde_json::Value::Number(n),
                None => serde_json::Value::String(format_float(*x)),
            },
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Missing => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<String> {
        self.check_nonempty()?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Internal(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Internal(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_jsonl(&self) -> CliResult<String> {
        self.check_nonempty()?;
        let mut out = String::new();
        for row in &self.rows {
            let mut obj = Map::new();
            for (c, v) in self.columns.iter().zip(row) {
                obj.insert(c.clone(), v.json());
            }
            out.push_str(&serde_json::Value::Object(obj).to_string());
            out.push('\n');
        }
        Ok(out)
    }

    fn check_nonempty(&self) -> CliResult<()> {
        if self.rows.is_empty() {
            return Err(CliError::Internal(format!("table {} has no rows", self.name)));
        }
        Ok(())
    }
}

/// Writes `<dir>/<name>.csv` and/or `<dir>/<name>.jsonl`; returns the paths.
pub fn emit(table: &Table, format: OutputFormat, dir: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let p = dir.join(format!("{}.csv", table.name));
        fs::write(&p, table.to_csv()?)?;
        paths.push(p);
    }
    if matches!(format, OutputFormat::Jsonl | OutputFormat::Both) {
        let p = dir.join(format!("{}.jsonl", table.name));
        fs::write(&p, table.to_jsonl()?)?;
        paths.push(p);
    }
    Ok(paths)
}
