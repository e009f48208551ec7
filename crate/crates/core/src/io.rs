//! JSON Lines record files.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::types::{validate_records, CheckpointRecord};

/// Parses one record per non-blank line.
///
/// Malformed lines are always fatal. Records that parse but break an
/// invariant are fatal under `strict`; otherwise they are dropped with a
/// warning.
pub fn parse_records<R: BufRead>(reader: R, strict: bool) -> Result<Vec<CheckpointRecord>> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CheckpointRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
        lines.push(i + 1);
    }
    let violations = validate_records(&records);
    if violations.is_empty() {
        return Ok(records);
    }
    if strict {
        let v = &violations[0];
        return Err(Error::Parse {
            line: lines[v.index],
            message: format!("{} ({} violations in total)", v.reason, violations.len()),
        });
    }
    let mut bad = vec![false; records.len()];
    for v in &violations {
        warn!("line {}: {}; record dropped", lines[v.index], v.reason);
        bad[v.index] = true;
    }
    Ok(records
        .into_iter()
        .zip(bad)
        .filter_map(|(r, b)| (!b).then_some(r))
        .collect())
}

pub fn read_records(path: &Path, strict: bool) -> Result<Vec<CheckpointRecord>> {
    let file = File::open(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    parse_records(BufReader::new(file), strict).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_records<W: Write>(mut w: W, records: &[CheckpointRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
