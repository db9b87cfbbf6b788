//! CSV result tables with `#`-prefixed metadata lines.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

/// Build identifier written into every header. Set `TTGAUSS_BUILD_ID` at
/// compile time (e.g. to a commit hash) to pin it.
pub fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), option_env!("TTGAUSS_BUILD_ID").unwrap_or("unknown"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem; the table is written to `<out_dir>/<name>.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra metadata lines specific to this table.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }
}

/// Shortest round-trip formatting, so reruns produce identical bytes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Semicolon-joined list, used for rank vectors inside one CSV cell.
pub fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn metadata_lines(cfg: &ExperimentConfig, extra: &[String]) -> Vec<String> {
    let mut lines = vec![
        format!("experiment: {}", cfg.experiment.id()),
        format!("build: ttgauss {}", build_id()),
        format!("seed: {}", cfg.seed),
    ];
    lines.extend(cfg.to_toml_lines().into_iter().map(|l| format!("config: {l}")));
    lines.extend(extra.iter().cloned());
    lines
}

pub fn write_table(dir: &Path, metadata: &[String], table: &Table) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{}.csv", table.name));
    let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    for line in metadata.iter().chain(&table.notes) {
        writeln!(file, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Reads a table written by [`write_table`]: metadata lines, header, rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let meta: Vec<String> = text.lines().take_while(|l| l.starts_with('#')).map(|l| l.trim_start_matches('#').trim().to_string()).collect();
    let body: String = text.lines().skip(meta.len()).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
    Ok((meta, header, rows))
}
