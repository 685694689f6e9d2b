use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;

use anyhow::Context;
use serde::Serialize;

use crate::config::{ReportFormat, RunConfig};

/// A numeric table written as tab-separated text. Each column is documented
/// in a `#` comment line above the header row.
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[(&str, &str)]) -> Self {
        Self {
            name,
            columns: columns.iter().map(|(c, d)| (c.to_string(), d.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|&v| number(v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (c, d) in &self.columns {
            let _ = writeln!(out, "# {c}: {d}");
        }
        let header: Vec<&str> = self.columns.iter().map(|(c, _)| c.as_str()).collect();
        let _ = writeln!(out, "{}", header.join("\t"));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }
}

/// Shortest round-trip text for `v`, in exponent form when very small or large.
pub fn number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    /// What each reported quantity means.
    definitions: &'a BTreeMap<&'static str, &'static str>,
    result: &'a T,
}

pub fn render<T: Serialize>(
    command: &str,
    config: &RunConfig,
    definitions: &BTreeMap<&'static str, &'static str>,
    result: &T,
) -> anyhow::Result<String> {
    let envelope = Envelope { command, config, definitions, result };
    Ok(match config.format {
        ReportFormat::Json => serde_json::to_string_pretty(&envelope)? + "\n",
        ReportFormat::Toml => toml::to_string(&envelope)?,
    })
}

/// Writes the report and tables under `output_dir`, or prints the report
/// to stdout when no directory is configured.
pub fn emit<T: Serialize>(
    command: &str,
    config: &RunConfig,
    definitions: &BTreeMap<&'static str, &'static str>,
    result: &T,
    tables: &[Table],
) -> anyhow::Result<()> {
    let text = render(command, config, definitions, result)?;
    let Some(dir) = &config.output_dir else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = command.replace('-', "_");
    let path = dir.join(format!("{stem}.{}", config.format.extension()));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    for table in tables {
        let path = dir.join(format!("{stem}_{}.tsv", table.name));
        std::fs::write(&path, table.render()).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}
