use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{MelAnalyzer, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

/// A full utterance with its ground-truth mel (`len / hop + 1` frames).
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub audio: Waveform,
    pub mel: MelSpectrogram,
}

/// Hop-aligned crop: `audio.len() == hop × mel.frames()`.
#[derive(Clone, Debug)]
pub struct TrainingSegment {
    pub source_id: String,
    pub audio: Waveform,
    pub mel: MelSpectrogram,
}

impl TrainingSegment {
    pub fn new(source_id: String, audio: Waveform, mel: MelSpectrogram, hop: usize) -> Result<Self> {
        if audio.len() != hop * mel.frames() {
            return Err(Error::invalid(format!(
                "segment of {} samples does not match {} frames at hop {hop}",
                audio.len(),
                mel.frames()
            )));
        }
        Ok(Self { source_id, audio, mel })
    }
}

/// Crops `segment_samples` of audio starting on a hop boundary together with
/// the matching mel frames. Shorter utterances are zero-padded and their mel
/// is recomputed from the padded audio.
pub fn sample_segment<R: Rng + ?Sized>(
    utt: &Utterance,
    segment_samples: usize,
    analyzer: &MelAnalyzer,
    rng: &mut R,
) -> Result<TrainingSegment> {
    let hop = analyzer.config().hop_size;
    if segment_samples == 0 || segment_samples % hop != 0 {
        return Err(Error::Config(format!("segment of {segment_samples} samples is not a positive multiple of {hop}")));
    }
    let frames = segment_samples / hop;
    let len = utt.audio.len();
    if len >= segment_samples {
        let max_start = (len - segment_samples) / hop;
        let start = rng.random_range(0..=max_start);
        // frame t is centred on sample t·hop, so the mel rows line up with the crop
        let audio = utt.audio.slice_padded(start * hop, segment_samples);
        let mel = utt.mel.slice_frames(start, frames)?;
        TrainingSegment::new(utt.id.clone(), audio, mel, hop)
    } else {
        let audio = utt.audio.slice_padded(0, segment_samples);
        let mel = analyzer.mel_spectrogram(&audio)?.slice_frames(0, frames)?;
        TrainingSegment::new(utt.id.clone(), audio, mel, hop)
    }
}

/// Deterministic batch schedule: each epoch visits a seed-shuffled
/// permutation of the training set, and the crop positions of step `s`
/// depend only on `(seed, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSchedule {
    pub seed: u64,
    pub n_items: usize,
    pub batch_size: usize,
}

const CROP_STREAM_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

impl BatchSchedule {
    pub fn new(seed: u64, n_items: usize, batch_size: usize) -> Result<Self> {
        if n_items == 0 || batch_size == 0 {
            return Err(Error::invalid("batch schedule needs at least one item and a positive batch size"));
        }
        Ok(Self { seed, n_items, batch_size })
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.n_items.div_ceil(self.batch_size) as u64
    }

    pub fn epoch_of(&self, step: u64) -> u64 {
        step / self.steps_per_epoch()
    }

    /// Item indices of the batch used at `step`. The final batch of an
    /// epoch wraps to the start of the permutation.
    pub fn indices(&self, step: u64) -> Vec<usize> {
        let epoch = self.epoch_of(step);
        let within = (step % self.steps_per_epoch()) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut perm: Vec<usize> = (0..self.n_items).collect();
        perm.shuffle(&mut rng);
        (0..self.batch_size).map(|i| perm[(within * self.batch_size + i) % self.n_items]).collect()
    }

    /// Generator for crop offsets at `step`.
    pub fn crop_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ CROP_STREAM_KEY);
        rng.set_stream(step);
        rng
    }

    /// Samples the segments for `step`.
    pub fn batch(
        &self,
        step: u64,
        utterances: &[Utterance],
        segment_samples: usize,
        analyzer: &MelAnalyzer,
    ) -> Result<Vec<TrainingSegment>> {
        if utterances.len() != self.n_items {
            return Err(Error::invalid(format!("schedule covers {} items, got {}", self.n_items, utterances.len())));
        }
        let mut rng = self.crop_rng(step);
        self.indices(step)
            .into_iter()
            .map(|i| sample_segment(&utterances[i], segment_samples, analyzer, &mut rng))
            .collect()
    }
}
