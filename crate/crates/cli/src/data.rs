use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use voclab::datasets::{build_manifest, cache_mels, write_fixture_corpus};

use crate::config::RunConfig;
use crate::provenance;

pub fn fixture(out: &Path, count: usize, seconds: f64, seed: u64) -> Result<()> {
    write_fixture_corpus(out, count, seconds, seed)?;
    println!("wrote {count} utterances of {seconds} s to {}", out.display());
    Ok(())
}

/// Indexes the corpus, writes the manifest and fills the mel cache.
pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let manifest = build_manifest(&cfg.paths.corpus, cfg.split_sizes(), cfg.split.seed, &cfg.mel)
        .with_context(|| format!("indexing {}", cfg.paths.corpus.display()))?;
    std::fs::create_dir_all(&cfg.paths.cache).with_context(|| cfg.paths.cache.display().to_string())?;
    manifest.save(&cfg.manifest_path())?;
    let report = cache_mels(&manifest, &cfg.mel, &cfg.mel_cache_dir())?;
    println!(
        "{} utterances: {} computed, {} up to date, {} failed",
        manifest.entries().len(),
        report.computed.len(),
        report.skipped.len(),
        report.failed.len()
    );
    provenance::stamp(
        &cfg.paths.cache,
        "prepare",
        cfg,
        json!({ "mel_config_hash": manifest.header.mel_config_hash }),
    )?;
    for (id, reason) in &report.failed {
        eprintln!("failed {id}: {reason}");
    }
    if !report.failed.is_empty() {
        bail!("{} utterances could not be analysed", report.failed.len());
    }
    Ok(())
}
