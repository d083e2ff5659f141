//! Corpus indexing, train/validation split, mel caching and segment sampling.

mod cache;
mod manifest;
mod segment;

use std::path::Path;

pub use cache::{cache_mels, CacheEntry, CacheIndex, CacheReport, MelCache, CACHE_INDEX};
pub use manifest::{
    build_manifest, parse_metadata, DatasetManifest, ManifestEntry, ManifestHeader, Split, SplitSizes,
    MANIFEST_FORMAT, METADATA_FILE,
};
pub use segment::{sample_segment, BatchSchedule, TrainingSegment, Utterance};

use crate::dsp::{read_wav, ResamplePolicy};
use crate::error::Result;

/// Loads audio and cached mels for every entry of `split`, in manifest order.
pub fn load_utterances(manifest: &DatasetManifest, cache: &MelCache, split: Split) -> Result<Vec<Utterance>> {
    manifest
        .split(split)
        .map(|e| {
            let audio = read_wav(&manifest.audio_path(e), ResamplePolicy::Reject)?;
            let mel = cache.get(&e.utterance_id)?;
            Ok(Utterance { id: e.utterance_id.clone(), audio, mel })
        })
        .collect()
}

/// Loads one utterance by id, computing nothing.
pub fn load_utterance(manifest: &DatasetManifest, cache: &MelCache, id: &str) -> Result<Utterance> {
    let e = manifest.get(id).ok_or_else(|| crate::Error::invalid(format!("unknown utterance {id}")))?;
    let audio = read_wav(&manifest.audio_path(e), ResamplePolicy::Reject)?;
    Ok(Utterance { id: id.to_string(), audio, mel: cache.get(id)? })
}

/// Writes a small LJSpeech-layout corpus of synthetic voiced utterances
/// (harmonic tones with a gliding pitch and amplitude envelope).
pub fn write_fixture_corpus(root: &Path, count: usize, seconds: f64, seed: u64) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let wavs = root.join("wavs");
    std::fs::create_dir_all(&wavs).map_err(|e| crate::Error::io(&wavs, e))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sr = crate::dsp::SAMPLE_RATE as f64;
    let n = (seconds * sr).round() as usize;
    let mut meta = String::new();
    for u in 0..count {
        let id = format!("FX001-{:04}", u + 1);
        let f0: f64 = rng.random_range(100.0..220.0);
        let glide: f64 = rng.random_range(-0.3..0.3);
        let syll: f64 = rng.random_range(2.0..5.0);
        let mut phase = 0.0;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let f = f0 * (1.0 + glide * t / seconds);
                phase += 2.0 * std::f64::consts::PI * f / sr;
                let env = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * syll * t).cos();
                let voiced: f64 = (1..=8).map(|h| (h as f64 * phase).sin() / h as f64).sum();
                let breath: f64 = rng.random_range(-1.0..1.0);
                0.25 * env * voiced + 0.01 * breath
            })
            .collect();
        let w = crate::dsp::Waveform::new(samples, crate::dsp::SAMPLE_RATE)?;
        crate::dsp::write_wav(&wavs.join(format!("{id}.wav")), &w)?;
        meta.push_str(&format!("{id}|Synthetic utterance number {}.|Synthetic utterance number {}.\n", u + 1, u + 1));
    }
    let path = root.join(manifest::METADATA_FILE);
    std::fs::write(&path, meta).map_err(|e| crate::Error::io(&path, e))
}
