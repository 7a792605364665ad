use std::fmt::Write as _;

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Number, Value};

use infauction::numerics::real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Flat numeric table for csv output.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub struct Report {
    pub command: String,
    pub seed: u64,
    pub params: Value,
    pub result: Value,
    pub checks: Vec<Assertion>,
    pub table: Table,
}

impl Report {
    pub fn new(command: &str, seed: u64, params: Value) -> Self {
        Report { command: command.into(), seed, params, result: Value::Null, checks: Vec::new(), table: Table::default() }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Assertion { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn envelope(&self) -> Value {
        let mut m = Map::new();
        m.insert("tool".into(), Value::String("infauction".into()));
        m.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        m.insert("command".into(), Value::String(self.command.clone()));
        m.insert("seed".into(), Value::from(self.seed));
        m.insert("params".into(), self.params.clone());
        m.insert("result".into(), self.result.clone());
        m.insert("checks".into(), serde_json::to_value(&self.checks).expect("plain structs"));
        m.insert("passed".into(), Value::Bool(self.passed()));
        canonical(Value::Object(m))
    }

    pub fn emit(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.envelope())? + "\n"),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.table.header)?;
                for r in &self.table.rows {
                    w.write_record(r)?;
                }
                Ok(String::from_utf8(w.into_inner()?)?)
            }
            Format::Text => Ok(self.text()),
        }
    }

    fn text(&self) -> String {
        let mut s = format!("infauction {}  seed {}\n", self.command, self.seed);
        if let Value::Object(m) = canonical(self.result.clone()) {
            for (k, v) in m {
                let _ = writeln!(s, "  {k}: {}", compact(&v));
            }
        }
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}  {}", c.name, c.detail);
        }
        s
    }
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Rounds to 12 significant digits. Keys come out sorted because the map
/// type is ordered.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().expect("f64 number"));
            Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

/// A real as a JSON value; non-finite values become strings.
pub fn real_value(x: f64) -> Value {
    match real::label(x) {
        Some(l) => Value::String(l.into()),
        None => Number::from_f64(x).map(Value::Number).expect("finite"),
    }
}

pub fn reals(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| real_value(*x)).collect())
}

/// Table cell for a real, with the same rounding as the json output.
pub fn cell(x: f64) -> String {
    match real::label(x) {
        Some(l) => l.into(),
        None => format!("{}", round12(x)),
    }
}
