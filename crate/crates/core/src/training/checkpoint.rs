use std::collections::HashMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{MetricHistory, SetupHashes, TrainSetup, TrainState};
use crate::error::{Error, Result};
use crate::nn::{AdamW, ParamStore, Tensor};
use crate::records::{self, Record, CHECKPOINT_MAGIC, FORMAT_VERSION};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// Decimal, since JSON numbers cannot hold a u128.
    word_pos: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    setup: TrainSetup,
    hashes: SetupHashes,
    step: u64,
    epoch: u64,
    steps_per_epoch: u64,
    opt_g_step: u64,
    opt_d_step: u64,
    rng: RngState,
    history: MetricHistory,
}

const GEN: &str = "generator/";
const DISC: &str = "discriminator/";

fn moment_records(prefix: &str, opt: &AdamW<f32>, store: &ParamStore<f32>) -> Vec<Record> {
    let mut out = Vec::new();
    for (i, (name, _, _)) in store.iter().enumerate() {
        if let Some((m, v)) = &opt.moments[i] {
            for (tag, t) in [("m", m), ("v", v)] {
                out.push(Record { name: format!("{prefix}{tag}/{name}"), shape: t.shape().to_vec(), data: t.data().to_vec() });
            }
        }
    }
    out
}

fn prefixed(prefix: &str, store: &ParamStore<f32>) -> Vec<Record> {
    records::store_records(store)
        .into_iter()
        .map(|r| Record { name: format!("{prefix}{}", r.name), ..r })
        .collect()
}

impl TrainState<f32> {
    /// Writes parameters, optimiser moments, spectral-norm buffers, counters,
    /// noise generator position and history. The write is atomic.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            setup: self.setup.clone(),
            hashes: self.setup.hashes(),
            step: self.step,
            epoch: self.epoch,
            steps_per_epoch: self.steps_per_epoch,
            opt_g_step: self.opt_g.step,
            opt_d_step: self.opt_d.step,
            rng: RngState {
                seed: hex::encode(self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            history: self.history.clone(),
        };
        let mut recs = prefixed(GEN, self.generator.store());
        recs.extend(prefixed(DISC, self.discriminator.store()));
        recs.extend(moment_records("opt_g.", &self.opt_g, self.generator.store()));
        recs.extend(moment_records("opt_d.", &self.opt_d, self.discriminator.store()));
        records::write_file(path, CHECKPOINT_MAGIC, &serde_json::to_value(&header)?, &recs)
    }

    /// Restores a run. Every configuration hash stored in the checkpoint
    /// must match `setup`.
    pub fn load_checkpoint(path: &Path, setup: &TrainSetup) -> Result<Self> {
        let (header, recs) = records::read_file(path, CHECKPOINT_MAGIC)?;
        let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let header: CheckpointHeader = serde_json::from_value(header).map_err(|e| fail(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(fail(format!("unsupported checkpoint version {}", header.format_version)));
        }
        let expected = setup.hashes();
        for (what, e, f) in [
            ("generator", &expected.generator, &header.hashes.generator),
            ("discriminator", &expected.discriminator, &header.hashes.discriminator),
            ("mel", &expected.mel, &header.hashes.mel),
            ("training", &expected.train, &header.hashes.train),
        ] {
            if e != f {
                log::error!("{what} configuration differs from the checkpoint");
                return Err(Error::HashMismatch { expected: e.clone(), found: f.clone() });
            }
        }
        let n_train_hint = header.steps_per_epoch as usize * setup.train.batch_size;
        let mut state = TrainState::new(setup.clone(), n_train_hint.max(1))?;
        state.steps_per_epoch = header.steps_per_epoch;

        let mut by_prefix: HashMap<&str, Vec<Record>> = HashMap::new();
        for r in recs {
            let prefix = ["generator/", "discriminator/", "opt_g.", "opt_d."]
                .into_iter()
                .find(|p| r.name.starts_with(p))
                .ok_or_else(|| fail(format!("unexpected record {}", r.name)))?;
            let name = r.name[prefix.len()..].to_string();
            by_prefix.entry(prefix).or_default().push(Record { name, ..r });
        }
        let mut take = |p: &str| by_prefix.remove(p).unwrap_or_default();
        records::load_into_store(state.generator.store_mut(), &take(GEN), path)?;
        records::load_into_store(state.discriminator.store_mut(), &take(DISC), path)?;
        load_moments(&mut state.opt_g, state.generator.store(), take("opt_g."), path)?;
        load_moments(&mut state.opt_d, state.discriminator.store(), take("opt_d."), path)?;
        state.opt_g.step = header.opt_g_step;
        state.opt_d.step = header.opt_d_step;
        state.step = header.step;
        state.epoch = header.epoch;
        state.history = header.history;
        let seed: [u8; 32] = hex::decode(&header.rng.seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| fail("bad rng seed".into()))?;
        let word_pos: u128 = header.rng.word_pos.parse().map_err(|_| fail("bad rng position".into()))?;
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
        rng.set_stream(header.rng.stream);
        rng.set_word_pos(word_pos);
        state.rng = rng;
        Ok(state)
    }
}

fn load_moments(opt: &mut AdamW<f32>, store: &ParamStore<f32>, recs: Vec<Record>, path: &Path) -> Result<()> {
    let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut map: HashMap<String, Record> = recs.into_iter().map(|r| (r.name.clone(), r)).collect();
    for (i, (name, t, _)) in store.iter().enumerate() {
        let Some(slot) = opt.moments[i].as_mut() else { continue };
        for (tag, dst) in [("m", &mut slot.0), ("v", &mut slot.1)] {
            let r = map.remove(&format!("{tag}/{name}")).ok_or_else(|| fail(format!("missing moment {tag}/{name}")))?;
            if r.shape != t.shape() {
                return Err(fail(format!("moment shape mismatch for {name}")));
            }
            *dst = Tensor::new(r.shape, r.data);
        }
    }
    if let Some(extra) = map.keys().next() {
        return Err(fail(format!("unexpected moment {extra}")));
    }
    Ok(())
}

/// Reads only the configuration stored in a checkpoint.
pub fn read_checkpoint_setup(path: &Path) -> Result<TrainSetup> {
    let (header, _) = records::read_file(path, CHECKPOINT_MAGIC)?;
    let header: CheckpointHeader =
        serde_json::from_value(header).map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok(header.setup)
}
