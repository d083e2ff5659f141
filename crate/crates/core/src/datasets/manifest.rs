use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "voclab-manifest";
pub const METADATA_FILE: &str = "metadata.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Number of training and validation utterances; together they must cover the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
}

impl SplitSizes {
    /// 12,950 / 150, the LJSpeech split.
    pub const LJSPEECH: SplitSizes = SplitSizes { train: 12_950, validation: 150 };

    pub fn total(&self) -> usize {
        self.train + self.validation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    /// Relative to the corpus root.
    pub audio_path: PathBuf,
    pub transcript: String,
    pub duration_samples: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub split: SplitSizes,
    pub mel_config_hash: String,
}

/// All utterances of a corpus with their split assignment, in metadata order.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(header: ManifestHeader, root: PathBuf, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { header, root, entries };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(Error::invalid(format!("duplicate utterance id {}", e.utterance_id)));
            }
        }
        let val = self.entries.iter().filter(|e| e.split == Split::Validation).count();
        let sizes = SplitSizes { train: self.entries.len() - val, validation: val };
        if sizes != self.header.split {
            return Err(Error::invalid(format!("manifest split {sizes:?} disagrees with header {:?}", self.header.split)));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn train(&self) -> Vec<&ManifestEntry> {
        self.split(Split::Train).collect()
    }

    pub fn validation(&self) -> Vec<&ManifestEntry> {
        self.split(Split::Validation).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.utterance_id == id)
    }

    pub fn audio_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.audio_path)
    }

    /// Header line followed by one JSON object per entry.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e)?).expect("writing to a String");
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, root: PathBuf, path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader =
            serde_json::from_str(lines.next().ok_or_else(|| fail("empty manifest".into()))?)
                .map_err(|e| fail(format!("header: {e}")))?;
        if header.format != MANIFEST_FORMAT {
            return Err(fail(format!("unexpected format tag {:?}", header.format)));
        }
        let entries = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| fail(format!("line {}: {e}", i + 2))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(header, root, entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::records::write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    /// Loads a manifest whose audio paths are resolved against `root`.
    pub fn load(path: &Path, root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, root.to_path_buf(), path)
    }
}

/// `id|transcript[|normalized]` lines of an LJSpeech-style metadata file.
pub fn parse_metadata(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut parts = l.split('|');
            let id = parts.next().unwrap_or("").trim();
            if id.is_empty() {
                return Err(Error::Format { path: path.to_path_buf(), reason: format!("line {}: missing id", i + 1) });
            }
            let Some(raw) = parts.next() else {
                return Err(Error::Format { path: path.to_path_buf(), reason: format!("line {}: missing transcript", i + 1) });
            };
            let text = parts.next().filter(|s| !s.is_empty()).unwrap_or(raw);
            Ok((id.to_string(), text.trim().to_string()))
        })
        .collect()
}

fn wav_duration(path: &Path) -> Result<usize> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::AudioFormat { path: path.to_path_buf(), reason: other.to_string() },
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate { expected: SAMPLE_RATE, actual: spec.sample_rate });
    }
    if spec.channels != 1 {
        return Err(Error::AudioFormat { path: path.to_path_buf(), reason: format!("{} channels", spec.channels) });
    }
    Ok(reader.duration() as usize)
}

/// Indexes `root/metadata.csv` and `root/wavs/<id>.wav`, then assigns the
/// last `sizes.validation` entries of a seed-shuffled order to validation.
pub fn build_manifest(root: &Path, sizes: SplitSizes, seed: u64, mel: &MelConfig) -> Result<DatasetManifest> {
    let meta_path = root.join(METADATA_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let rows = parse_metadata(&text, &meta_path)?;
    if sizes.total() != rows.len() {
        return Err(Error::Config(format!(
            "split {} + {} does not match the {} utterances in {}",
            sizes.train,
            sizes.validation,
            rows.len(),
            root.display()
        )));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Train; rows.len()];
    for &i in &order[sizes.train..] {
        split[i] = Split::Validation;
    }
    let entries = rows
        .into_iter()
        .zip(split)
        .map(|((id, transcript), split)| {
            let rel = PathBuf::from("wavs").join(format!("{id}.wav"));
            let duration_samples = wav_duration(&root.join(&rel))?;
            Ok(ManifestEntry { utterance_id: id, audio_path: rel, transcript, duration_samples, split })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        seed,
        split: sizes,
        mel_config_hash: crate::records::config_hash(mel),
    };
    DatasetManifest::new(header, root.to_path_buf(), entries)
}
