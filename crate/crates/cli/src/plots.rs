//! Plot data as whitespace-separated numeric text plus a JSON descriptor per figure.

use std::path::Path;

use serde_json::json;

use crate::report::write_json;
use crate::CliError;

pub struct Figure {
    name: String,
    description: String,
    columns: Vec<(String, String)>,
    files: Vec<String>,
}

impl Figure {
    pub fn new(name: &str, description: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            columns: columns.iter().map(|(n, u)| (n.to_string(), u.to_string())).collect(),
            files: Vec::new(),
        }
    }

    /// Writes one data file; `rows` must match the column count.
    pub fn add(&mut self, out: &Path, file: &str, series: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
        let dir = out.join("plots");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(e.to_string()))?;
        let mut text = String::new();
        text.push_str(&format!("# {series}\n#"));
        for (n, u) in &self.columns {
            text.push_str(&format!(" {n}[{u}]"));
        }
        text.push('\n');
        for r in rows {
            debug_assert_eq!(r.len(), self.columns.len());
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        std::fs::write(dir.join(file), text).map_err(|e| CliError::Io(e.to_string()))?;
        self.files.push(file.to_string());
        Ok(())
    }

    pub fn finish(self, out: &Path) -> Result<(), CliError> {
        if self.files.is_empty() {
            return Ok(());
        }
        let cols: Vec<_> = self.columns.iter().map(|(n, u)| json!({ "name": n, "unit": u })).collect();
        let desc = json!({
            "figure": self.name,
            "description": self.description,
            "columns": cols,
            "files": self.files,
        });
        write_json(&out.join("plots"), &format!("{}.json", self.name), &desc)
    }
}

pub fn db(z: scres::Complex64) -> f64 {
    20.0 * z.norm().log10()
}
