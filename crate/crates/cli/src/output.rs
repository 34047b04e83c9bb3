//! Tabular artifacts: a provenance block followed by one header row and the data rows.

use std::io::Write;

use serde_json::{Map, Value};

use crate::config::Format;

/// Values are `Null` where a row has no entry for a column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub provenance: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

pub type Row = Vec<(&'static str, Value)>;

impl Table {
    /// Builds a table whose columns follow first appearance across `rows`.
    pub fn from_rows(provenance: Vec<(String, String)>, rows: Vec<Row>) -> Self {
        let mut columns: Vec<&'static str> = Vec::new();
        for row in &rows {
            for (c, _) in row {
                if !columns.contains(c) {
                    columns.push(c);
                }
            }
        }
        let rows = rows
            .into_iter()
            .map(|row| {
                columns
                    .iter()
                    .map(|c| row.iter().find(|(k, _)| k == c).map(|(_, v)| v.clone()).unwrap_or(Value::Null))
                    .collect()
            })
            .collect();
        Table { provenance, columns, rows }
    }

    pub fn write(&self, format: Format, out: &mut impl Write) -> std::io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.provenance {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    fn write_json(&self, out: &mut impl Write) -> std::io::Result<()> {
        let provenance: Map<String, Value> =
            self.provenance.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        let doc = serde_json::json!({
            "provenance": provenance,
            "columns": self.columns,
            "rows": rows,
        });
        serde_json::to_writer_pretty(&mut *out, &doc)?;
        writeln!(out)
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
