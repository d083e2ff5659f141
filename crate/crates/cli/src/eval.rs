use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use voclab::dsp::{read_wav, ResamplePolicy};
use voclab::evaluation::{assemble_mos_set, mcd_report, EvalPair, McdMode, VocoderOutputs};
use voclab::generators::GeneratorKind;

use crate::config::RunConfig;
use crate::provenance;
use crate::synth::{list_files, stem, TIMES_FILE};

fn wavs_by_id(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    Ok(list_files(dir, "wav")?.into_iter().map(|p| (stem(&p), p)).collect())
}

fn read_times(path: &Path) -> Result<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let mut out = HashMap::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let secs = row.get(1).and_then(|s| s.parse().ok()).with_context(|| format!("{} row {}", path.display(), i + 2))?;
        out.insert(row.get(0).unwrap_or_default().to_string(), secs);
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, reference: &Path, syn: &Path, mode: McdMode, out: &Path, policy: ResamplePolicy) -> Result<()> {
    let refs = wavs_by_id(reference)?;
    let syns = wavs_by_id(syn)?;
    let unpaired: Vec<&str> = refs
        .keys()
        .filter(|k| !syns.contains_key(*k))
        .chain(syns.keys().filter(|k| !refs.contains_key(*k)))
        .map(String::as_str)
        .collect();
    if !unpaired.is_empty() {
        bail!("{} utterances lack a counterpart: {}", unpaired.len(), unpaired.join(", "));
    }
    if refs.is_empty() {
        bail!("no WAV files in {}", reference.display());
    }
    let pairs = refs
        .iter()
        .map(|(id, rp)| {
            Ok(EvalPair {
                utterance_id: id.clone(),
                reference: read_wav(rp, policy)?,
                synthesized: read_wav(&syns[id], policy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = mcd_report(&pairs, mode, &cfg.mel)?;
    let times = syn.join(TIMES_FILE);
    if times.is_file() {
        report = report.with_seconds(&read_times(&times)?);
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    report.write_csv(out)?;
    provenance::stamp(out, "eval", cfg, json!({ "reference": reference, "synthesized": syn, "mode": mode }))?;
    println!("{mode} MCD over {} utterances: {:.4} dB -> {}", pairs.len(), report.mean_mcd, out.display());
    Ok(())
}

fn id_paths(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    Ok(wavs_by_id(dir)?.into_iter().collect())
}

/// Reads `<outputs>/<kind>/<gt|tts>/*.wav` and exports the shuffled listening set.
pub fn mos(cfg: &RunConfig, outputs: &Path, originals: &Path, out: &Path) -> Result<()> {
    let mut set = VocoderOutputs::new();
    for kind in GeneratorKind::ALL {
        for mode in McdMode::ALL {
            let dir = outputs.join(kind.name()).join(mode.name().to_ascii_lowercase());
            if dir.is_dir() {
                set.entry(kind).or_default().insert(mode, id_paths(&dir)?);
            }
        }
    }
    let manifest = assemble_mos_set(&set, &id_paths(originals)?, cfg.eval.mos_seed)?;
    manifest.export(out, cfg.eval.loudness_db)?;
    voclab::records::write_atomic(&out.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    provenance::stamp(out, "mos", cfg, json!({ "outputs": outputs, "originals": originals }))?;
    println!("exported {} listening-test items to {}", manifest.items.len(), out.display());
    Ok(())
}
