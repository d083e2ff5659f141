use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use voclab::datasets::SplitSizes;
use voclab::discriminators::DiscriminatorConfig;
use voclab::dsp::MelConfig;
use voclab::generators::{GeneratorConfig, GeneratorKind, HOP_SIZE};
use voclab::training::{TrainConfig, TrainSetup};

use crate::usage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// LJSpeech-layout corpus: `metadata.csv` plus `wavs/`.
    pub corpus: PathBuf,
    /// Manifest and cached mels.
    pub cache: PathBuf,
    /// One sub-directory per generator kind.
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "data/LJSpeech-1.1".into(),
            cache: "runs/cache".into(),
            checkpoints: "runs/checkpoints".into(),
            output: "runs/out".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Default,
    Tiny,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    /// Directory of `<kind>.toml` generator configs overriding the preset.
    pub generators: Option<PathBuf>,
    /// Discriminator config file overriding the preset.
    pub discriminator: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub validation: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: SplitSizes::LJSPEECH.train, validation: SplitSizes::LJSPEECH.validation, seed: 1234 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Noise seed for synthesis of latent kinds.
    pub seed: u64,
    pub mos_seed: u64,
    /// Loudness target of the listening-test export, dBFS RMS.
    pub loudness_db: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { seed: 1234, mos_seed: 1234, loudness_db: -21.0 }
    }
}

/// Everything a command needs, from one TOML file plus `--set` overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub mel: MelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn literal(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec.split_once('=').ok_or_else(|| usage(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut t = table;
    for p in parents {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("override {key:?}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), literal(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (or starts from the defaults), applies the overrides and
    /// resolves relative paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e| usage(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.corpus);
        resolve(&mut cfg.paths.cache);
        resolve(&mut cfg.paths.checkpoints);
        resolve(&mut cfg.paths.output);
        if let Some(p) = cfg.model.generators.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.model.discriminator.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        self.train.validate()?;
        if self.mel.hop_size != HOP_SIZE {
            return Err(usage(format!("mel hop {} differs from the generators' upsampling factor {HOP_SIZE}", self.mel.hop_size)));
        }
        if self.split.train == 0 {
            return Err(usage("split.train must be positive"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        voclab::records::config_hash(self)
    }

    pub fn split_sizes(&self) -> SplitSizes {
        SplitSizes { train: self.split.train, validation: self.split.validation }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.cache.join("manifest.jsonl")
    }

    pub fn mel_cache_dir(&self) -> PathBuf {
        self.paths.cache.join("mels")
    }

    pub fn run_dir(&self, kind: GeneratorKind) -> PathBuf {
        self.paths.checkpoints.join(kind.name())
    }

    pub fn generator(&self, kind: GeneratorKind) -> Result<GeneratorConfig> {
        if let Some(dir) = &self.model.generators {
            let p = dir.join(format!("{}.toml", kind.name()));
            if p.is_file() {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let g = GeneratorConfig::from_toml(&text).with_context(|| p.display().to_string())?;
                if g.kind() != kind {
                    return Err(usage(format!("{} describes {}, not {kind}", p.display(), g.kind())));
                }
                return Ok(g);
            }
        }
        Ok(match self.model.preset {
            Preset::Default => {
                let g = GeneratorConfig::default_for(kind);
                if g.n_mels() != self.mel.n_mels {
                    return Err(usage(format!("default {kind} expects {} mel bands, config has {}", g.n_mels(), self.mel.n_mels)));
                }
                g
            }
            Preset::Tiny => GeneratorConfig::tiny(kind, self.mel.n_mels),
        })
    }

    pub fn discriminator(&self) -> Result<DiscriminatorConfig> {
        if let Some(p) = &self.model.discriminator {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            return Ok(DiscriminatorConfig::from_toml(&text).with_context(|| p.display().to_string())?);
        }
        Ok(match self.model.preset {
            Preset::Default => DiscriminatorConfig::default(),
            Preset::Tiny => DiscriminatorConfig::tiny(),
        })
    }

    pub fn setup(&self, kind: GeneratorKind) -> Result<TrainSetup> {
        let setup = TrainSetup {
            train: self.train.clone(),
            generator: self.generator(kind)?,
            discriminator: self.discriminator()?,
            mel: self.mel.clone(),
        };
        setup.validate()?;
        Ok(setup)
    }
}
