use std::path::{Path, PathBuf};

use anyhow::Result;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Stamps `target` with the config hash: `<dir>/provenance.json` for a
/// directory, `<file>.provenance.json` next to a file.
pub fn stamp(target: &Path, command: &str, cfg: &RunConfig, extra: Value) -> Result<PathBuf> {
    let path = if target.is_dir() {
        target.join("provenance.json")
    } else {
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(".provenance.json");
        target.with_file_name(name)
    };
    let mut body = json!({
        "command": command,
        "config_hash": cfg.hash(),
        "voclab_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    voclab::records::write_atomic(&path, &serde_json::to_vec_pretty(&body)?)?;
    Ok(path)
}
