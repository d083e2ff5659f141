use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde_json::json;
use voclab::dsp::read_mel;
use voclab::evaluation::{benchmark_csv, benchmark_table, BenchEntry, UNAVAILABLE};
use voclab::generators::{Generator, GeneratorKind};

use crate::config::RunConfig;
use crate::provenance;
use crate::synth::{list_files, load_generator};
use crate::train::{CHECKPOINT_FILE, METRICS_FILE};

pub fn run(cfg: &RunConfig, checkpoints: &[PathBuf], mel_dir: &Path, out: &Path) -> Result<()> {
    let files = list_files(mel_dir, "mel")?;
    if files.is_empty() {
        bail!("no mel files in {}", mel_dir.display());
    }
    let mels = files.iter().map(|p| read_mel(p)).collect::<voclab::Result<Vec<_>>>()?;

    // Each generator paired with the metric log of its run, when one exists.
    let mut models: Vec<(Generator<f32>, Option<PathBuf>)> = Vec::new();
    if checkpoints.is_empty() {
        // Trained checkpoints where available, freshly initialised models otherwise.
        for kind in GeneratorKind::ALL {
            let dir = cfg.run_dir(kind);
            let ckpt = dir.join(CHECKPOINT_FILE);
            let g = if ckpt.is_file() {
                load_generator(&ckpt, cfg)?.generator
            } else {
                Generator::build(&cfg.generator(kind)?, cfg.train.seed)?
            };
            models.push((g, Some(dir.join(METRICS_FILE))));
        }
    } else {
        for c in checkpoints {
            let g = load_generator(c, cfg)?.generator;
            models.push((g, c.parent().map(|d| d.join(METRICS_FILE))));
        }
    }
    let entries: Vec<BenchEntry<'_>> = models
        .iter()
        .map(|(g, log)| BenchEntry { generator: g, metric_log: log.as_deref().filter(|p| p.is_file()) })
        .collect();
    let rows = benchmark_table(&entries, &mels, cfg.eval.seed)?;
    let csv = benchmark_csv(&rows)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    voclab::records::write_atomic(out, csv.as_bytes())?;
    provenance::stamp(out, "bench", cfg, json!({ "mels": mel_dir, "checkpoints": checkpoints }))?;
    let cell = |v: Option<f64>| v.map_or(UNAVAILABLE.to_string(), |v| format!("{v:.4}"));
    println!("{:<12} {:>12} {:>10} {:>10}  input", "model", "params", "s/batch", "s/sample");
    for r in &rows {
        println!(
            "{:<12} {:>12} {:>10} {:>10}  {}",
            r.kind.name(),
            r.params,
            cell(r.s_per_batch),
            cell(r.s_per_sample),
            r.input_type
        );
    }
    Ok(())
}
