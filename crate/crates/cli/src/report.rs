use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Machine-readable run report. Carries no timestamps, so identical reruns
/// give identical bytes.
#[derive(Debug, Serialize)]
pub struct Report {
    pub config: Value,
    pub results: Value,
    pub warnings: Vec<String>,
    pub version: &'static str,
}

impl Report {
    pub fn new(config: impl Serialize, results: impl Serialize, warnings: Vec<String>) -> anyhow::Result<Self> {
        Ok(Self {
            config: serde_json::to_value(config)?,
            results: serde_json::to_value(results)?,
            warnings,
            version: VERSION,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing report {}", path.display()))
    }
}

/// Left-aligned text table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |r: &[String]| {
            let cells: Vec<String> = r.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            cells.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

pub fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pads_columns() {
        let mut t = Table::new(["id", "score"]);
        t.row(["a", "1.0"]);
        t.row(["long", "0.25"]);
        assert_eq!(t.render(), "id    score\n----  -----\na     1.0\nlong  0.25\n");
    }

    #[test]
    fn report_field_names() {
        let r = Report::new(serde_json::json!({"seed": 1}), serde_json::json!([]), vec![]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["config", "results", "version", "warnings"]);
    }
}
