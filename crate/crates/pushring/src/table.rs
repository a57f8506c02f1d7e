//! Tabular output with embedded run metadata.

use crate::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Sampled PMF/CDF values (or any labelled numeric table) together with the
/// parameters and method that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionTable {
    /// Column names, one per entry of each row.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Full run configuration echo, method name, tolerances.
    pub metadata: serde_json::Value,
}

impl DistributionTable {
    pub fn new(columns: Vec<&str>, metadata: serde_json::Value) -> Self {
        DistributionTable {
            columns: columns.into_iter().map(String::from).collect(),
            rows: Vec::new(),
            metadata,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// CSV with `# key: value` metadata header lines; numbers carry 17
    /// significant digits so identical runs emit bit-identical files.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# metadata: {}", self.metadata)?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// JSON-lines mirror of the CSV records; first line is the metadata.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{}",
            serde_json::json!({"metadata": self.metadata, "columns": self.columns})
        )?;
        for row in &self.rows {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "[{}]", vals.join(","))?;
        }
        Ok(())
    }
}
