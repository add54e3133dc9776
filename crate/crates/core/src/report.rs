//! Tabular report emission. Every real is printed with 6 significant digits,
//! and the JSON form carries exactly the value shown in the CSV form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// `%.6g`: 6 significant digits, trailing zeros removed, scientific notation
/// outside `[1e-4, 1e6)`.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// The value printed by [`fmt_sig6`], read back.
pub fn round_sig6(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig6(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => fmt_sig6(*x),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(i) => Value::from(*i),
            Cell::Real(x) => serde_json::Number::from_f64(round_sig6(*x))
                .map(Value::Number)
                .unwrap_or(Value::Null),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

/// A rectangular table with a fixed header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// JSON layout of a [`Table`]: column names plus row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> TableJson {
        TableJson {
            columns: self.columns.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Write `table` to `<stem>.<ext>` and return the path.
pub fn emit_report(table: &Table, stem: &Path, format: Format) -> Result<PathBuf> {
    let mut path = stem.as_os_str().to_owned();
    path.push(".");
    path.push(format.extension());
    let path = PathBuf::from(path);
    match format {
        Format::Csv => write_text(&path, &table.to_csv())?,
        Format::Json => write_json(&path, &table.to_json())?,
    }
    Ok(path)
}

/// Render a JSON table as a Markdown pipe table.
pub fn markdown(table: &TableJson) -> String {
    let cell = |v: &Value| match v {
        Value::String(s) => s.replace('|', "\\|"),
        Value::Null => String::new(),
        Value::Number(n) if n.is_f64() => fmt_sig6(n.as_f64().unwrap_or(f64::NAN)),
        other => other.to_string(),
    };
    let mut s = format!("| {} |\n", table.columns.join(" | "));
    s += &format!("|{}\n", "---|".repeat(table.columns.len()));
    for row in &table.rows {
        s += &format!("| {} |\n", row.iter().map(cell).collect::<Vec<_>>().join(" | "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (1.0 / 6.0, "0.166667"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234567, "1.23457e-05"),
            (99999.95, "99999.9"),
            (999999.5, "1e+06"),
            (0.1 + 0.2, "0.3"),
            (1.0 / 51.0, "0.0196078"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn json_and_csv_agree() {
        let mut t = Table::new(["name", "n", "value"]);
        t.push(vec!["a,b".into(), 3usize.into(), (2.0f64 / 3.0).into()]);
        t.push(vec!["c".into(), 0usize.into(), 1e-7.into()]);
        let csv = t.to_csv();
        assert_eq!(csv, "name,n,value\n\"a,b\",3,0.666667\nc,0,1e-07\n");
        let json = t.to_json();
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        for (rec, row) in rd.records().zip(&json.rows) {
            let v: f64 = rec.unwrap()[2].parse().unwrap();
            assert_eq!(Some(v), row[2].as_f64());
        }
    }

    #[test]
    fn emit_writes_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["x"]);
        t.push(vec![0.25.into()]);
        let stem = dir.path().join("sub/table");
        let c = emit_report(&t, &stem, Format::Csv).unwrap();
        let j = emit_report(&t, &stem, Format::Json).unwrap();
        assert_eq!(fs::read_to_string(c).unwrap(), "x\n0.25\n");
        let back: TableJson = read_json(&j).unwrap();
        assert_eq!(back, t.to_json());
    }

    #[test]
    fn unwritable_target_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(&Table::new(["x"]), &blocker.join("t"), Format::Csv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rounding_is_idempotent_and_close(x in -1e9f64..1e9) {
                let r = round_sig6(x);
                prop_assert_eq!(round_sig6(r), r);
                prop_assert!((r - x).abs() <= 5e-6 * x.abs() + f64::MIN_POSITIVE);
            }
        }
    }
}
