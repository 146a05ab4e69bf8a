//! Deterministic report documents.
//!
//! A report is one JSON document with three top-level blocks: `config` (the
//! embedded run configuration), `results`, and `meta` (timestamps and tool
//! info). The `config` + `results` pair is the report *body*: re-running the
//! embedded config must reproduce it byte for byte, so the printer is
//! canonical — keys sorted, fixed indentation, and every float rendered with
//! 17 significant digits so parsing gives back the exact bits.

use serde_json::Value;

use crate::error::{Error, Result};

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(v: &Value, out: &mut String, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_f64(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                write_value(item, out, indent + 1);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(&map[*key], out, indent + 1);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Canonical text of a JSON value (sorted keys, 17-digit floats).
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, &mut out, 0);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: Value,
    pub results: Value,
    pub meta: Value,
}

impl Report {
    pub fn new(config: Value, results: Value, meta: Value) -> Self {
        Self {
            config,
            results,
            meta,
        }
    }

    /// The reproducible part: config and results, canonically printed.
    pub fn body(&self) -> String {
        let mut doc = serde_json::Map::new();
        doc.insert("config".to_string(), self.config.clone());
        doc.insert("results".to_string(), self.results.clone());
        canonical_json(&Value::Object(doc))
    }

    /// The full document including the metadata block.
    pub fn document(&self) -> String {
        let mut doc = serde_json::Map::new();
        doc.insert("config".to_string(), self.config.clone());
        doc.insert("results".to_string(), self.results.clone());
        doc.insert("meta".to_string(), self.meta.clone());
        let mut text = canonical_json(&Value::Object(doc));
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Report> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("report is not valid JSON: {e}")))?;
        let obj = v
            .as_object()
            .ok_or_else(|| Error::InvalidInput("report must be a JSON object".into()))?;
        let get = |key: &str| -> Result<Value> {
            obj.get(key)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("report is missing the `{key}` block")))
        };
        Ok(Report {
            config: get("config")?,
            results: get("results")?,
            meta: get("meta")?,
        })
    }
}

/// A plot-ready numeric table, written as a CSV side file next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Serialize with a hard finiteness guarantee: any NaN or infinity in `value`
/// becomes `null` under serde_json, which would silently corrupt a report.
/// Optional fields must use `skip_serializing_if` so that a surviving null
/// can only mean a lost number.
pub fn to_checked_value<T: serde::Serialize>(value: &T) -> Result<Value> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    fn reject_null(v: &Value, path: &str) -> Result<()> {
        match v {
            Value::Null => Err(Error::InvalidInput(format!(
                "non-finite number in report at {path}"
            ))),
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    reject_null(item, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            Value::Object(map) => {
                for (k, item) in map {
                    reject_null(item, &format!("{path}.{k}"))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
    reject_null(&v, "$")?;
    Ok(v)
}
