//! Shared readers and writers for the pipeline's intermediate files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use policyscope_core::ingest::{parse_ads, AdRecord};

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Loads the normalized ad store, reporting leftover row errors as data
/// errors (the store is machine-written and must be clean).
pub fn load_ad_store(path: &Path) -> Result<Vec<AdRecord>, CliError> {
    let outcome = parse_ads(open(path)?)?;
    if let Some(first) = outcome.errors.first() {
        return Err(CliError::data(format!(
            "ad store {} is corrupt at line {}: {}",
            path.display(),
            first.line,
            first.message
        )));
    }
    Ok(outcome.records)
}

#[derive(Serialize, Deserialize)]
struct TextRow {
    id: String,
    text: String,
}

/// Text store: newline-delimited JSON `{id, text}` rows, sorted by id.
pub fn write_texts(path: &Path, texts: &BTreeMap<String, String>) -> Result<(), CliError> {
    let mut w = create(path)?;
    for (id, text) in texts {
        serde_json::to_writer(
            &mut w,
            &TextRow {
                id: id.clone(),
                text: text.clone(),
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_texts(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TextRow = serde_json::from_str(line).map_err(|e| {
            CliError::data(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.insert(row.id, row.text);
    }
    Ok(out)
}

pub fn write_string(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(())
}
