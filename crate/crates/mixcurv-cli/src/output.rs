//! Report envelope and JSON / CSV writers.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{CliError, Format};

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: Value,
    /// `None` for reports without a verdict (inspection, listing).
    pub pass: Option<bool>,
    pub results: Vec<Value>,
}

impl Report {
    pub fn new(config: impl Serialize, pass: Option<bool>, results: Vec<Value>) -> Self {
        Report {
            tool: "mixcurv",
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config).expect("configs serialize"),
            pass,
            results,
        }
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

/// Flattens nested objects to `a.b` and arrays to `a[i][j]`, row-major.
pub fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Null => out.push((prefix.into(), String::new())),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per result; the header is the union of flattened keys in first-seen order.
pub fn csv(results: &[Value]) -> String {
    let rows: Vec<Vec<(String, String)>> = results
        .iter()
        .map(|r| {
            let mut row = Vec::new();
            flatten("", r, &mut row);
            row
        })
        .collect();
    let mut header: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in &rows {
        for (k, _) in row {
            if seen.insert(k.clone()) {
                header.push(k.clone());
            }
        }
    }
    let mut out = header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in rows {
        let m: Map<String, Value> = row.into_iter().map(|(k, v)| (k, Value::String(v))).collect();
        let line: Vec<String> =
            header.iter().map(|h| m.get(h).and_then(Value::as_str).map(quote).unwrap_or_default()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => csv(&report.results),
    }
}

pub fn emit(report: &Report, format: Format, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = render(report, format);
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattening_is_row_major() {
        let mut out = Vec::new();
        flatten("", &json!({"a": {"m": [[1, 2], [3, 4]]}, "b": null, "c": "x,y"}), &mut out);
        let keys: Vec<&str> = out.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["a.m[0][0]", "a.m[0][1]", "a.m[1][0]", "a.m[1][1]", "b", "c"]);
    }

    #[test]
    fn csv_unions_columns_and_quotes() {
        let s = csv(&[json!({"a": 1}), json!({"a": 2, "b": "p,q"})]);
        assert_eq!(s, "a,b\n1,\n2,\"p,q\"\n");
    }
}
