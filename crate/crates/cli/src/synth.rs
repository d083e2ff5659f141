use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use voclab::dsp::{read_mel, read_wav, write_wav, MelAnalyzer, MelConfig, MelSpectrogram, ResamplePolicy};
use voclab::generators::Generator;
use voclab::records::{CHECKPOINT_MAGIC, WEIGHTS_MAGIC};
use voclab::training::{read_checkpoint_setup, TrainState};

use crate::config::RunConfig;
use crate::{provenance, usage};

/// Per-utterance synthesis times written next to the WAVs; `eval` picks it up.
pub const TIMES_FILE: &str = "synthesis_times.csv";

pub enum Input {
    Mels(PathBuf),
    Wavs(PathBuf),
}

/// A generator with the mel configuration it expects.
pub struct Loaded {
    pub generator: Generator<f32>,
    pub mel: MelConfig,
}

/// Loads a training checkpoint or an exported weight file, told apart by magic.
pub fn load_generator(path: &Path, cfg: &RunConfig) -> Result<Loaded> {
    let mut magic = [0u8; 4];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading {}", path.display()))?;
    if &magic == CHECKPOINT_MAGIC {
        let setup = read_checkpoint_setup(path)?;
        let mel = setup.mel.clone();
        let state = TrainState::load_checkpoint(path, &setup)?;
        Ok(Loaded { generator: state.generator, mel })
    } else if &magic == WEIGHTS_MAGIC {
        Ok(Loaded { generator: Generator::from_weights(path)?, mel: cfg.mel.clone() })
    } else {
        Err(usage(format!("{} is neither a checkpoint nor a weight file", path.display())))
    }
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn input_mel(path: &Path, wav_input: bool, analyzer: &MelAnalyzer, policy: ResamplePolicy) -> Result<MelSpectrogram> {
    if wav_input {
        let w = read_wav(path, policy)?;
        Ok(analyzer.mel_spectrogram(&w)?)
    } else {
        Ok(read_mel(path)?)
    }
}

pub fn run(
    cfg: &RunConfig,
    checkpoint: &Path,
    input: Input,
    out: &Path,
    seed: Option<u64>,
    policy: ResamplePolicy,
) -> Result<()> {
    let Loaded { generator, mel } = load_generator(checkpoint, cfg)?;
    let kind = generator.kind();
    let (dir, wav_input) = match &input {
        Input::Mels(d) => (d, false),
        Input::Wavs(d) => (d, true),
    };
    let files = list_files(dir, if wav_input { "wav" } else { "mel" })?;
    if files.is_empty() {
        bail!("no input files in {}", dir.display());
    }
    let seed = match (seed, kind.uses_noise()) {
        (Some(s), _) => s,
        (None, true) => {
            let s = rand::random::<u64>();
            println!("{kind} draws noise; using generated seed {s} (pass --seed {s} to reproduce)");
            s
        }
        (None, false) => cfg.eval.seed,
    };
    let analyzer = MelAnalyzer::new(&mel)?;
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;

    let mut times = csv::Writer::from_writer(Vec::new());
    times.write_record(["utterance_id", "seconds"])?;
    let mut failed = Vec::new();
    for (i, path) in files.iter().enumerate() {
        let id = stem(path);
        // One noise stream per file, so a failed file leaves the others unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let result = (|| -> Result<f64> {
            let m = input_mel(path, wav_input, &analyzer, policy)?;
            let noise = generator.sample_noise(&mut rng, 1, m.frames());
            let t0 = Instant::now();
            let w = generator.synthesize(&m, noise.as_ref())?;
            let secs = t0.elapsed().as_secs_f64();
            write_wav(&out.join(format!("{id}.wav")), &w)?;
            Ok(secs)
        })();
        match result {
            Ok(secs) => times.write_record([id.clone(), format!("{secs:.6}")])?,
            Err(e) => {
                eprintln!("failed {}: {e:#}", path.display());
                failed.push(id);
            }
        }
    }
    voclab::records::write_atomic(&out.join(TIMES_FILE), &times.into_inner()?)?;
    provenance::stamp(
        out,
        "synth",
        cfg,
        json!({
            "checkpoint": checkpoint,
            "kind": kind,
            "generator_config_hash": generator.config().hash(),
            "seed": seed,
        }),
    )?;
    println!("{kind}: {} of {} files synthesized into {}", files.len() - failed.len(), files.len(), out.display());
    if !failed.is_empty() {
        bail!("{} inputs failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

pub fn export_weights(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let loaded = load_generator(checkpoint, cfg)?;
    loaded.generator.export_weights(out)?;
    provenance::stamp(
        out,
        "export-weights",
        cfg,
        json!({ "checkpoint": checkpoint, "generator_config_hash": loaded.generator.config().hash() }),
    )?;
    println!("wrote {} weights to {}", loaded.generator.kind(), out.display());
    Ok(())
}
