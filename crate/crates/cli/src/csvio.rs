//! CSV output with provenance headers and an append guard.
//!
//! Every file starts with comment lines carrying the config hash, seed
//! and schema tag, then one header row. Appending to an existing file is
//! refused unless its config hash matches.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

pub struct CsvSink {
    path: PathBuf,
    file: fs::File,
}

impl CsvSink {
    /// Create (or append to) `path`. A fresh file gets the provenance
    /// header; an existing one must carry the same config hash.
    pub fn open(
        path: &Path,
        schema: &str,
        columns: &str,
        config_hash: &str,
        seed: u64,
    ) -> anyhow::Result<Self> {
        if path.exists() {
            let existing = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let found = parse_header_hash(&existing)
                .with_context(|| format!("{} has no config-hash header", path.display()))?;
            if found != config_hash {
                bail!(
                    "refusing to append to {}: config hash {} does not match current {}",
                    path.display(),
                    found,
                    config_hash
                );
            }
            let file = fs::OpenOptions::new().append(true).open(path)?;
            Ok(Self {
                path: path.to_path_buf(),
                file,
            })
        } else {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            let mut file = fs::File::create(path)?;
            writeln!(file, "# fmflab {schema}")?;
            writeln!(file, "# config_hash={config_hash}")?;
            writeln!(file, "# seed={seed}")?;
            writeln!(file, "{columns}")?;
            Ok(Self {
                path: path.to_path_buf(),
                file,
            })
        }
    }

    pub fn row(&mut self, rendered: &str) -> anyhow::Result<()> {
        writeln!(self.file, "{rendered}")
            .with_context(|| format!("writing {}", self.path.display()))?;
        Ok(())
    }
}

pub fn parse_header_hash(text: &str) -> Option<&str> {
    text.lines()
        .take(8)
        .find_map(|l| l.strip_prefix("# config_hash="))
}

/// Parsed CSV: comment headers, column names, string cells.
pub struct CsvTable {
    pub schema: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> anyhow::Result<CsvTable> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut schema = None;
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# fmflab ") {
            schema = Some(rest.to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if columns.is_empty() {
            columns = cells;
        } else {
            if cells.len() != columns.len() {
                bail!("ragged CSV row in {}: {line}", path.display());
            }
            rows.push(cells);
        }
    }
    if columns.is_empty() {
        bail!("{} contains no header row", path.display());
    }
    Ok(CsvTable {
        schema,
        columns,
        rows,
    })
}

/// Fixed-precision float cell so outputs are byte-stable.
pub fn cell(v: f64) -> String {
    format!("{v:.6}")
}
