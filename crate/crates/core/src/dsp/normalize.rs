use super::waveform::{rms, Waveform};
use crate::error::{Error, Result};

/// Loudness target for listening-test material, in dBFS.
pub const DEFAULT_LOUDNESS_DB: f64 = -21.0;

#[derive(Clone, Debug)]
pub struct LoudnessNormalized {
    pub waveform: Waveform,
    pub gain: f64,
    /// Fraction of samples clipped to ±1 after the gain.
    pub clipped_fraction: f64,
}

/// Scales `w` so its RMS level equals `target_db` dBFS, then clips to [-1, 1].
pub fn normalize_loudness(w: &Waveform, target_db: f64) -> Result<LoudnessNormalized> {
    let level = rms(w.samples());
    if level == 0.0 || !level.is_finite() {
        return Err(Error::invalid("cannot loudness-normalise a silent waveform"));
    }
    let gain = 10f64.powf(target_db / 20.0) / level;
    let mut clipped = 0usize;
    let samples = w
        .samples()
        .iter()
        .map(|&s| {
            let v = s * gain;
            if v.abs() > 1.0 {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0)
        })
        .collect();
    let clipped_fraction = clipped as f64 / w.len() as f64;
    if clipped > 0 {
        log::warn!("loudness normalisation clipped {:.3}% of samples", 100.0 * clipped_fraction);
    }
    Ok(LoudnessNormalized { waveform: Waveform::new(samples, w.sample_rate())?, gain, clipped_fraction })
}

/// Zero-mean, unit population-standard-deviation copy of `w`.
pub fn zscore_normalize(w: &Waveform) -> Result<Waveform> {
    let x = w.samples();
    if x.len() < 2 {
        return Err(Error::invalid("z-score normalisation needs at least two samples"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if x.iter().all(|&v| v == x[0]) || var <= 1e-24 {
        return Err(Error::invalid("cannot z-score a constant waveform"));
    }
    let std = var.sqrt();
    Waveform::new(x.iter().map(|v| (v - mean) / std).collect(), w.sample_rate())
}
