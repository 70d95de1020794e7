//! Result emission. Every float is printed with 12 significant digits.

use std::io::Write;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// CSV cell for a float; empty for `NaN`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let r = round12(x);
        if r == 0.0 {
            // -0 prints as "-0"
            "0".into()
        } else if r.abs() < 1e-5 || r.abs() >= 1e16 {
            format!("{r:e}")
        } else {
            r.to_string()
        }
    }
}

/// Rounds every float in `v`; non-finite values become `null`.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn write_json<W: Write>(mut out: W, v: Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &round_json(v)).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// A table with a fixed header; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flattens a JSON document into `quantity,index,value` rows: nested
/// objects join keys with `.`, array positions go to `index` (joined with
/// `/` when nested).
pub fn long_table(v: &Value) -> Table {
    let mut t = Table::new(&["quantity", "index", "value"]);
    flatten(v, String::new(), String::new(), &mut t);
    t
}

fn flatten(v: &Value, key: String, index: String, t: &mut Table) {
    match v {
        Value::Object(o) => {
            for (k, child) in o {
                let key = if key.is_empty() { k.clone() } else { format!("{key}.{k}") };
                flatten(child, key, index.clone(), t);
            }
        }
        Value::Array(a) => {
            for (i, child) in a.iter().enumerate() {
                let index = if index.is_empty() { i.to_string() } else { format!("{index}/{i}") };
                flatten(child, key.clone(), index, t);
            }
        }
        Value::Null => t.push(vec![key, index, String::new()]),
        Value::Bool(b) => t.push(vec![key, index, b.to_string()]),
        Value::Number(n) => {
            let cell = if n.is_f64() { fmt_f64(n.as_f64().expect("f64")) } else { n.to_string() };
            t.push(vec![key, index, cell]);
        }
        Value::String(s) => t.push(vec![key, index, s.clone()]),
    }
}

pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}
