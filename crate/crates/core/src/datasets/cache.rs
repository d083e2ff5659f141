use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::DatasetManifest;
use crate::dsp::{encode_mel, read_mel, read_wav, MelAnalyzer, MelConfig, MelSpectrogram, ResamplePolicy};
use crate::error::{Error, Result};

pub const CACHE_INDEX: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    /// sha256 of the WAV file bytes.
    pub audio_sha256: String,
    /// File name inside the cache directory.
    pub file: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub mel_config_hash: String,
    pub entries: BTreeMap<String, CacheEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CacheReport {
    pub computed: Vec<String>,
    pub skipped: Vec<String>,
    /// `(utterance_id, error message)` for entries that could not be cached.
    pub failed: Vec<(String, String)>,
}

/// Read access to a populated cache directory.
#[derive(Clone, Debug)]
pub struct MelCache {
    dir: PathBuf,
    index: CacheIndex,
}

impl MelCache {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(CACHE_INDEX);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index = serde_json::from_str(&text).map_err(|e| Error::Format { path, reason: e.to_string() })?;
        Ok(Self { dir: dir.to_path_buf(), index })
    }

    pub fn index(&self) -> &CacheIndex {
        &self.index
    }

    /// Fails when the cache was built under a different mel configuration.
    pub fn check_config(&self, cfg: &MelConfig) -> Result<()> {
        let expected = crate::records::config_hash(cfg);
        if self.index.mel_config_hash != expected {
            return Err(Error::HashMismatch { expected, found: self.index.mel_config_hash.clone() });
        }
        Ok(())
    }

    pub fn path(&self, id: &str) -> Option<PathBuf> {
        self.index.entries.get(id).map(|e| self.dir.join(&e.file))
    }

    pub fn get(&self, id: &str) -> Result<MelSpectrogram> {
        let path = self.path(id).ok_or_else(|| Error::invalid(format!("{id} is not in the mel cache")))?;
        read_mel(&path)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

enum Outcome {
    Skipped(CacheEntry),
    Computed(CacheEntry),
}

/// Writes one MEL1 file per utterance into `out_dir`. Entries whose audio
/// hash and config hash match the existing index are left alone; failures
/// are reported per file and do not stop the others.
pub fn cache_mels(manifest: &DatasetManifest, cfg: &MelConfig, out_dir: &Path) -> Result<CacheReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let analyzer = MelAnalyzer::new(cfg)?;
    let cfg_hash = crate::records::config_hash(cfg);
    let old = match MelCache::open(out_dir) {
        Ok(c) if c.index.mel_config_hash == cfg_hash => c.index,
        _ => CacheIndex::default(),
    };
    let results: Vec<(String, Result<Outcome>)> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let id = e.utterance_id.clone();
            let r = (|| {
                let audio_path = manifest.audio_path(e);
                let bytes = std::fs::read(&audio_path).map_err(|err| Error::io(&audio_path, err))?;
                let digest = sha256_hex(&bytes);
                let file = format!("{id}.mel");
                if let Some(prev) = old.entries.get(&id) {
                    if prev.audio_sha256 == digest && out_dir.join(&prev.file).is_file() {
                        return Ok(Outcome::Skipped(prev.clone()));
                    }
                }
                let w = read_wav(&audio_path, ResamplePolicy::Reject)?;
                let mel = analyzer.mel_spectrogram(&w)?;
                crate::records::write_atomic(&out_dir.join(&file), &encode_mel(&mel))?;
                Ok(Outcome::Computed(CacheEntry { audio_sha256: digest, file }))
            })();
            (id, r)
        })
        .collect();
    let mut index = CacheIndex { mel_config_hash: cfg_hash, entries: BTreeMap::new() };
    let mut report = CacheReport::default();
    for (id, r) in results {
        match r {
            Ok(Outcome::Skipped(entry)) => {
                index.entries.insert(id.clone(), entry);
                report.skipped.push(id);
            }
            Ok(Outcome::Computed(entry)) => {
                index.entries.insert(id.clone(), entry);
                report.computed.push(id);
            }
            Err(e) => report.failed.push((id, e.to_string())),
        }
    }
    let json = serde_json::to_vec_pretty(&index)?;
    crate::records::write_atomic(&out_dir.join(CACHE_INDEX), &json)?;
    Ok(report)
}
