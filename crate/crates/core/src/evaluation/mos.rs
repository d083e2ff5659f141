use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mcd_report::McdMode;
use crate::dsp::{normalize_loudness, read_wav, write_wav, ResamplePolicy};
use crate::error::{Error, Result};
use crate::generators::GeneratorKind;

pub const MOS_KINDS: usize = 6;
pub const MOS_SENTENCES: usize = 20;
pub const MOS_ORIGINALS: usize = 100;
pub const MOS_TOTAL: usize = MOS_KINDS * 2 * MOS_SENTENCES + MOS_ORIGINALS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MosSource {
    Vocoder { kind: GeneratorKind, mode: McdMode },
    Original,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosItem {
    pub slot_id: usize,
    pub source: MosSource,
    pub utterance_id: String,
    pub audio_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosManifest {
    pub shuffle_seed: u64,
    pub items: Vec<MosItem>,
}

/// Synthesized files per kind and mode, as `(utterance_id, path)` pairs.
pub type VocoderOutputs = BTreeMap<GeneratorKind, BTreeMap<McdMode, Vec<(String, PathBuf)>>>;

/// Builds the 340-item listening set: 6 kinds × {GT, TTS} × 20 sentences
/// plus 100 originals. The originals start with the 20 synthesis sentences
/// and are completed by a seeded draw from the rest of the pool; the final
/// order is a seeded shuffle.
pub fn assemble_mos_set(outputs: &VocoderOutputs, originals: &[(String, PathBuf)], seed: u64) -> Result<MosManifest> {
    if outputs.len() != MOS_KINDS {
        return Err(Error::invalid(format!("expected outputs of {MOS_KINDS} vocoders, got {}", outputs.len())));
    }
    let mut sentences: Option<BTreeSet<&str>> = None;
    let mut items = Vec::with_capacity(MOS_TOTAL);
    for (&kind, modes) in outputs {
        for mode in McdMode::ALL {
            let files = modes.get(&mode).map(Vec::as_slice).unwrap_or(&[]);
            if files.len() != MOS_SENTENCES {
                return Err(Error::invalid(format!("{kind} {mode}: expected {MOS_SENTENCES} files, got {}", files.len())));
            }
            let ids: BTreeSet<&str> = files.iter().map(|(id, _)| id.as_str()).collect();
            if ids.len() != MOS_SENTENCES {
                return Err(Error::invalid(format!("{kind} {mode}: duplicate utterance ids")));
            }
            match &sentences {
                None => sentences = Some(ids),
                Some(s) if *s != ids => {
                    return Err(Error::invalid(format!("{kind} {mode}: sentence set differs from the other outputs")))
                }
                _ => {}
            }
            for (id, path) in files {
                items.push((MosSource::Vocoder { kind, mode }, id.clone(), path.clone()));
            }
        }
        if modes.len() != 2 {
            return Err(Error::invalid(format!("{kind}: unexpected modes")));
        }
    }
    let sentences = sentences.expect("at least one vocoder");
    let pool: BTreeMap<&str, &PathBuf> = originals.iter().map(|(id, p)| (id.as_str(), p)).collect();
    if pool.len() != originals.len() {
        return Err(Error::invalid("duplicate ids in the originals pool"));
    }
    if pool.len() < MOS_ORIGINALS {
        return Err(Error::invalid(format!("originals pool has {} entries, need {MOS_ORIGINALS}", pool.len())));
    }
    let missing: Vec<&str> = sentences.iter().copied().filter(|id| !pool.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("originals missing for {missing:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest: Vec<&str> = originals.iter().map(|(id, _)| id.as_str()).filter(|id| !sentences.contains(id)).collect();
    rest.shuffle(&mut rng);
    for &id in sentences.iter().chain(rest.iter().take(MOS_ORIGINALS - MOS_SENTENCES)) {
        items.push((MosSource::Original, id.to_string(), pool[id].clone()));
    }
    items.shuffle(&mut rng);
    let items = items
        .into_iter()
        .enumerate()
        .map(|(slot_id, (source, utterance_id, audio_path))| MosItem { slot_id, source, utterance_id, audio_path })
        .collect();
    Ok(MosManifest { shuffle_seed: seed, items })
}

impl MosManifest {
    pub fn count(&self, pred: impl Fn(&MosSource) -> bool) -> usize {
        self.items.iter().filter(|i| pred(&i.source)).count()
    }

    /// Writes every item loudness-normalized to `target_db` as
    /// `audio/slot_NNN.wav`, the public `slots.csv` (slot_id, audio_path)
    /// and the private `key.csv` mapping slots to sources.
    pub fn export(&self, out_dir: &Path, target_db: f64) -> Result<()> {
        let audio_dir = out_dir.join("audio");
        std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        let mut public = csv::Writer::from_writer(Vec::new());
        let mut key = csv::Writer::from_writer(Vec::new());
        public.write_record(["slot_id", "audio_path"]).map_err(csv_err)?;
        key.write_record(["slot_id", "source", "kind", "mode", "utterance_id", "source_path"]).map_err(csv_err)?;
        for item in &self.items {
            let w = read_wav(&item.audio_path, ResamplePolicy::Reject)?;
            let normalized = normalize_loudness(&w, target_db)?;
            let rel = PathBuf::from("audio").join(format!("slot_{:03}.wav", item.slot_id));
            write_wav(&out_dir.join(&rel), &normalized.waveform)?;
            public.write_record([item.slot_id.to_string(), rel.display().to_string()]).map_err(csv_err)?;
            let (source, kind, mode) = match item.source {
                MosSource::Vocoder { kind, mode } => ("vocoder", kind.name().to_string(), mode.name().to_string()),
                MosSource::Original => ("original", String::new(), String::new()),
            };
            key.write_record([
                item.slot_id.to_string(),
                source.into(),
                kind,
                mode,
                item.utterance_id.clone(),
                item.audio_path.display().to_string(),
            ])
            .map_err(csv_err)?;
        }
        let finish = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")));
        crate::records::write_atomic(&out_dir.join("slots.csv"), &finish(public)?)?;
        crate::records::write_atomic(&out_dir.join("key.csv"), &finish(key)?)?;
        Ok(())
    }
}
