use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::{StepMetrics, ValidationPoint};
use crate::error::{Error, Result};

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepMetrics),
    Validation(ValidationPoint),
}

/// Appends one JSON line.
pub fn append_log(path: &Path, record: &LogRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    std::io::BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&l)
                .map_err(|e| Error::Format { path: path.to_path_buf(), reason: format!("line {}: {e}", i + 1) })
        })
        .collect()
}
