use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use voclab::datasets::{load_utterances, BatchSchedule, DatasetManifest, MelCache, Split, Utterance};
use voclab::generators::GeneratorKind;
use voclab::training::{fit, read_log, FitOptions, LogRecord, TrainState};

use crate::config::RunConfig;
use crate::{provenance, usage};

pub const CHECKPOINT_FILE: &str = "checkpoint.vckp";
pub const METRICS_FILE: &str = "metrics.jsonl";
const LOCK_FILE: &str = "train.lock";

/// Exclusive claim on a run directory, released on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                anyhow::anyhow!("{} exists: another trainer is using this directory (delete it if stale)", path.display())
            } else {
                anyhow::Error::new(e).context(path.display().to_string())
            }
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(RunLock(path))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub fn load_split(cfg: &RunConfig) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    let manifest = DatasetManifest::load(&cfg.manifest_path(), &cfg.paths.corpus)
        .with_context(|| format!("loading the manifest (run `voclab prepare` first)"))?;
    let cache = MelCache::open(&cfg.mel_cache_dir()).context("opening the mel cache")?;
    cache.check_config(&cfg.mel).context("mel cache was built with a different mel configuration")?;
    let train = load_utterances(&manifest, &cache, Split::Train)?;
    let val = load_utterances(&manifest, &cache, Split::Validation)?;
    if train.is_empty() {
        bail!("the manifest has no training utterances");
    }
    Ok((train, val))
}

/// Drops log records past `step` so a resumed run appends without duplicates.
fn truncate_log(path: &Path, step: u64) -> Result<usize> {
    if !path.exists() {
        return Ok(0);
    }
    let records = read_log(path)?;
    let kept: Vec<_> = records
        .iter()
        .filter(|r| match r {
            LogRecord::Step(m) => m.step <= step,
            LogRecord::Validation(v) => v.step <= step,
        })
        .collect();
    let mut text = Vec::new();
    for r in &kept {
        serde_json::to_writer(&mut text, r)?;
        text.push(b'\n');
    }
    voclab::records::write_atomic(path, &text)?;
    Ok(records.len() - kept.len())
}

pub fn run(cfg: &RunConfig, kind: GeneratorKind, resume: bool) -> Result<()> {
    let setup = cfg.setup(kind)?;
    let (train, val) = load_split(cfg)?;
    let dir = cfg.run_dir(kind);
    std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
    let _lock = RunLock::acquire(&dir)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let log_path = dir.join(METRICS_FILE);

    let mut state = if resume {
        if !ckpt.is_file() {
            return Err(usage(format!("--resume: no checkpoint at {}", ckpt.display())));
        }
        let state = TrainState::load_checkpoint(&ckpt, &setup)?;
        let expected = BatchSchedule::new(setup.train.seed, train.len(), setup.train.batch_size)?.steps_per_epoch();
        if state.steps_per_epoch != expected {
            return Err(usage(format!(
                "checkpoint has {} steps per epoch, the current training split gives {expected}",
                state.steps_per_epoch
            )));
        }
        let dropped = truncate_log(&log_path, state.step)?;
        if dropped > 0 {
            log::warn!("dropped {dropped} log records written after the checkpoint");
        }
        log::info!("resuming {kind} at step {}", state.step);
        state
    } else {
        if log_path.exists() {
            std::fs::remove_file(&log_path).with_context(|| log_path.display().to_string())?;
        }
        TrainState::new(setup.clone(), train.len())?
    };
    provenance::stamp(
        &dir,
        "train",
        cfg,
        json!({ "kind": kind, "setup_hashes": setup.hashes(), "parameters": state.generator.parameter_count() }),
    )?;
    if state.step >= setup.train.max_steps {
        println!("{kind}: already at step {} of {}", state.step, setup.train.max_steps);
        return Ok(());
    }
    let opts = FitOptions { metric_log: Some(log_path), checkpoint: Some(ckpt.clone()) };
    let summary = fit(&mut state, &train, &val, &opts)?;
    println!(
        "{kind}: {} steps to step {}, {:.4} s/batch, validation mel L1 {}, checkpoint {}",
        summary.steps,
        state.step,
        summary.mean_seconds_per_batch,
        summary.last_validation.map_or("n/a".to_string(), |v| format!("{v:.4}")),
        ckpt.display()
    );
    Ok(())
}
