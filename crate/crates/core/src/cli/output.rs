use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows of pre-formatted cells under a fixed header. Empty cells mean
/// "not applicable".
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    key_value: bool,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            key_value: false,
        }
    }

    /// Two-column `key,value` table; written as a single object in JSON.
    pub fn key_value() -> Self {
        Self {
            key_value: true,
            ..Self::new(&["key", "value"])
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn kv(&mut self, key: &str, value: String) {
        self.push(vec![key.to_string(), value]);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write(&self, out: &mut dyn Write, format: OutputFormat) -> io::Result<()> {
        match format {
            OutputFormat::Csv => {
                if !self.key_value {
                    writeln!(out, "{}", self.header.join(","))?;
                }
                for row in &self.rows {
                    writeln!(out, "{}", row.join(","))?;
                }
            }
            OutputFormat::JsonLines => {
                if self.key_value {
                    let obj: Map<String, Value> = self
                        .rows
                        .iter()
                        .map(|r| (r[0].clone(), json_cell(&r[1])))
                        .collect();
                    writeln!(out, "{}", Value::Object(obj))?;
                } else {
                    for row in &self.rows {
                        let obj: Map<String, Value> = self
                            .header
                            .iter()
                            .zip(row)
                            .map(|(h, c)| (h.clone(), json_cell(c)))
                            .collect();
                        writeln!(out, "{}", Value::Object(obj))?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn json_cell(cell: &str) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match cell {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = cell.parse::<i64>() {
        return Value::from(i);
    }
    match cell.parse::<f64>() {
        Ok(x) if x.is_finite() => Value::from(x),
        _ => Value::String(cell.to_string()),
    }
}
