//! Run outputs: CSV tables and images with `#` provenance headers, PGM
//! previews, and a sha256 manifest that `eval` checks before reading.
//!
//! Header lines are `# key=value`. Floats are written in shortest
//! round-trip form, so reading a CSV back yields the exact values written.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ghost_core::pgm::{self, PgmFormat};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::{CliError, TOOL_VERSION};

pub const MANIFEST: &str = "manifest.sha256";
/// Wall-clock log; the only output allowed to differ between equal runs.
pub const RUN_LOG: &str = "run.log";

/// Ordered `key=value` provenance lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Header(Vec<(String, String)>);

impl Header {
    pub fn for_run(config: &LoadedConfig, mode: &str) -> Self {
        Header(vec![
            ("tool".into(), TOOL_VERSION.into()),
            ("seed".into(), config.run.seed.to_string()),
            ("config_sha256".into(), config.hash.clone()),
            ("mode".into(), mode.into()),
        ])
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    fn lines(&self) -> Vec<String> {
        self.0.iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    fn render(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

/// A parsed CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Integrity(format!("missing column {name:?}")))
    }

    /// Value at `(row, column)`; empty cells are `None`.
    pub fn get_f64(&self, row: usize, name: &str) -> Result<Option<f64>, CliError> {
        let cell = self.rows[row][self.column(name)?].trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse()
            .map(Some)
            .map_err(|_| CliError::Integrity(format!("column {name:?} row {row}: {cell:?} is not a number")))
    }

    pub fn meta(&self, key: &str) -> Result<&str, CliError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Integrity(format!("header key {key:?} missing")))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Integrity(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_table(path: &Path, header: &Header, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(header.render().into_bytes());
    w.write_record(columns).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Integrity(e.to_string()))?;
    write_file(path, &bytes)
}

fn parse_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Integrity(format!("cannot read {}: {e}", path.display())))
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok(Table { meta: parse_meta(&text), columns, rows })
}

/// Image as `height` rows of `width` comma-separated values.
pub fn write_image_csv(path: &Path, header: &Header, values: &[f64], width: usize) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(header.render().into_bytes());
    for row in values.chunks(width) {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Integrity(e.to_string()))?;
    write_file(path, &bytes)
}

/// Returns `(meta, values, width, height)`.
pub fn read_image_csv(path: &Path) -> Result<(BTreeMap<String, String>, Vec<f64>, usize, usize), CliError> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(CliError::Integrity(format!("{}: ragged image rows", path.display())));
        }
        for cell in rec.iter() {
            values.push(cell.trim().parse::<f64>().map_err(|_| {
                CliError::Integrity(format!("{}: {cell:?} is not a number", path.display()))
            })?);
        }
        height += 1;
    }
    Ok((parse_meta(&text), values, width.unwrap_or(0), height))
}

/// 8-bit P5 preview; the comment block records the value mapping.
pub fn write_image_pgm(path: &Path, header: &Header, values: &[f64], width: usize, height: usize) -> Result<(), CliError> {
    let (img, offset, scale) = pgm::quantize(values, width, height);
    let mut comments = header.lines();
    comments.push(format!("value = {offset} + {scale} * sample"));
    write_file(path, &pgm::encode(&img, PgmFormat::Binary, &comments))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_file(path, text.as_bytes())
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Integrity(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest.sha256` listing `files` (names relative to `dir`).
pub fn write_manifest(dir: &Path, files: &[String]) -> Result<(), CliError> {
    let mut names = files.to_vec();
    names.sort();
    let mut out = String::new();
    for name in &names {
        out.push_str(&format!("{}  {name}\n", sha256_file(&dir.join(name))?));
    }
    write_text(&dir.join(MANIFEST), &out)
}

/// Checks every manifest entry; returns the listed names.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, CliError> {
    let path = dir.join(MANIFEST);
    let text = read_text(&path)?;
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| CliError::Integrity(format!("{}: malformed line {}", path.display(), i + 1)))?;
        let actual = sha256_file(&dir.join(name))?;
        if actual != hash {
            return Err(CliError::Integrity(format!("{name} does not match its recorded sha256")));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(CliError::Integrity(format!("{} lists no artifacts", path.display())));
    }
    Ok(names)
}
