use std::io::{ErrorKind, Write};

use serde_json::{Map, Value};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Print one line to stdout. A closed pipe (`| head`) ends the process quietly.
pub fn line(s: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{s}") {
        if e.kind() == ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("writing to stdout: {e}");
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, r: Vec<String>) {
        debug_assert_eq!(r.len(), self.header.len());
        self.rows.push(r);
    }

    pub fn print(&self) {
        line(&self.header.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| field(c)).collect();
            line(&cells.join(","));
        }
    }

    /// Rows as objects; cells that parse as numbers become numbers.
    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (h, c) in self.header.iter().zip(r) {
                    let v = match c.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => Value::String(c.clone()),
                    };
                    m.insert(h.clone(), v);
                }
                Value::Object(m)
            })
            .collect();
        Value::Array(rows)
    }

    pub fn emit(&self, fmt: Format) {
        match fmt {
            Format::Csv => self.print(),
            Format::Json => emit_value(&self.to_json(), fmt),
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// JSON as is, or as `key,value` lines with dotted paths.
pub fn emit_value(v: &Value, fmt: Format) {
    match fmt {
        Format::Json => line(&serde_json::to_string_pretty(v).expect("JSON values serialize")),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", v, &mut rows);
            line("key,value");
            for (k, x) in rows {
                line(&format!("{},{}", field(&k), field(&x)));
            }
        }
    }
}
