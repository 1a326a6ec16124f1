//! JSON Lines helpers.
//!
//! Pipeline outputs may start with a single header object of the form
//! `{"header": {...}}`; readers skip it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_header_line(trimmed) {
            continue;
        }
        let item = serde_json::from_str(trimmed).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Returns the header object of a JSON Lines file, if its first line is one.
pub fn read_jsonl_header(path: &Path) -> Result<Option<Value>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    match serde_json::from_str::<Value>(first.trim()) {
        Ok(Value::Object(mut map)) if map.len() == 1 && map.contains_key("header") => {
            Ok(map.remove("header"))
        }
        _ => Ok(None),
    }
}

fn is_header_line(line: &str) -> bool {
    line.starts_with("{\"header\":")
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: Option<&Value>, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| writeln!(w, "{line}").map_err(|e| Error::io(path, e));
    if let Some(h) = header {
        emit(serde_json::json!({ "header": h }).to_string())?;
    }
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        emit(line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
