//! Result tables and run manifests.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;

pub const SCHEMA_VERSION: &str = "fsl-results/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            // Display gives the shortest string that round-trips.
            Cell::Num(x) => format!("{x}"),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Rows keyed by a fixed column list. The first column is always the config
/// hash.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    config_hash: String,
}

impl Table {
    pub fn new(config_hash: &str, columns: &[&str]) -> Self {
        let mut cols = vec!["config_hash".to_string()];
        cols.extend(columns.iter().map(|c| c.to_string()));
        Self {
            columns: cols,
            rows: Vec::new(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len() + 1, self.columns.len(), "row width");
        let mut full = Vec::with_capacity(self.columns.len());
        full.push(Cell::Text(self.config_hash.clone()));
        full.extend(row);
        self.rows.push(full);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# schema={SCHEMA_VERSION} config_hash={}", self.config_hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.iter().map(Cell::to_json))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "schema": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "rows": rows,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub experiment: String,
    pub seed: u64,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub version: String,
    pub summary: CaseSummary,
    pub status: String,
    pub results_csv: String,
    pub results_json: String,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_versioned_header_and_hash_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("abc", &["x", "ok"]);
        t.push(vec![0.1.into(), true.into()]);
        t.push(vec![Cell::Empty, false.into()]);
        let path = dir.path().join("r.csv");
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# schema=fsl-results/1 config_hash=abc\nconfig_hash,x,ok\nabc,0.1,true\nabc,,false\n");
        let j = t.to_json();
        assert_eq!(j["rows"][0]["x"], 0.1);
        assert!(j["rows"][1]["x"].is_null());
    }
}
