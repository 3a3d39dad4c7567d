//! Line-delimited JSON helpers used for every on-disk artifact.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A line that failed to decode, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Decodes every non-blank line; malformed lines are reported, not fatal.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> (Vec<T>, Vec<LineError>) {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(item) => items.push(item),
            Err(e) => errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    (items, errors)
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> io::Result<(Vec<T>, Vec<LineError>)> {
    let mut text = String::new();
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    Ok(parse_lines(&text))
}

/// Reads a file where every line must decode.
pub fn read_strict<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let (items, errors) = read_file(path)?;
    match errors.first() {
        None => Ok(items),
        Some(e) => Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}:{}: {}", path.display(), e.line, e.message),
        )),
    }
}

pub fn to_string<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

/// Writes the whole file atomically (temp file + rename).
pub fn write_file<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(to_string(items).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

/// Appends one record and syncs it to disk before returning.
pub fn append_synced<T: Serialize>(path: &Path, item: &T) -> io::Result<()> {
    append_all_synced(path, std::slice::from_ref(item))
}

/// Appends records in order with a single sync at the end.
pub fn append_all_synced<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    if items.is_empty() {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(to_string(items).as_bytes())?;
    f.sync_data()
}
