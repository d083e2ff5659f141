use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::nn::Real;

#[derive(Clone, Debug)]
pub struct SynthesisOutput {
    pub waveforms: Vec<Waveform>,
    /// Wall-clock seconds of each synthesis, excluding the warm-up pass.
    pub seconds: Vec<f64>,
}

impl SynthesisOutput {
    pub fn mean_seconds(&self) -> f64 {
        self.seconds.iter().sum::<f64>() / self.seconds.len().max(1) as f64
    }
}

/// Synthesizes every mel in order after one uncounted warm-up pass on the
/// first. Noise for latent kinds comes from a generator seeded with `seed`,
/// drawn in input order.
pub fn synthesize_set<T: Real>(g: &Generator<T>, mels: &[MelSpectrogram], seed: u64) -> Result<SynthesisOutput> {
    let first = mels.first().ok_or_else(|| Error::invalid("no mel spectrograms to synthesize"))?;
    let mut warm_rng = ChaCha8Rng::seed_from_u64(seed);
    let warm_noise = g.sample_noise(&mut warm_rng, 1, first.frames());
    g.synthesize(first, warm_noise.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waveforms = Vec::with_capacity(mels.len());
    let mut seconds = Vec::with_capacity(mels.len());
    for mel in mels {
        let noise = g.sample_noise(&mut rng, 1, mel.frames());
        let started = Instant::now();
        let w = g.synthesize(mel, noise.as_ref())?;
        seconds.push(started.elapsed().as_secs_f64());
        waveforms.push(w);
    }
    Ok(SynthesisOutput { waveforms, seconds })
}
