//! Report serialization and atomic file writes.
//!
//! Every artifact is written to a temp file in the destination directory and
//! renamed into place, so a crash never leaves a partial file. JSON reports
//! are rendered through `serde_json::Value`, whose map type keeps keys
//! sorted; two identical report values therefore serialize to identical
//! bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("create dir {}", dir.display()), e))?;
    }
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::io(format!("create temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    tmp.flush()
        .map_err(|e| Error::io(format!("flush {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("rename into {}", path.display()), e.error))?;
    Ok(())
}

/// Render a value as pretty JSON with sorted keys and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::Numeric(format!("serialize report: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| Error::Numeric(format!("serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Serialize a value as sorted-key JSON and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, to_json_string(value)?.as_bytes())
}
