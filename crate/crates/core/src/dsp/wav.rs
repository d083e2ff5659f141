use std::path::Path;

use super::waveform::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// What to do with a WAV whose sample rate is not 22050 Hz.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResamplePolicy {
    #[default]
    Reject,
    /// Linear interpolation to 22050 Hz.
    Linear,
}

/// Reads a 16-bit PCM mono WAV as samples in [-1, 1).
pub fn read_wav(path: &Path, policy: ResamplePolicy) -> Result<Waveform> {
    let fail = |reason: String| Error::AudioFormat { path: path.to_path_buf(), reason };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => fail(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(fail(format!(
            "expected 16-bit PCM, found {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(fail(format!("expected mono, found {} channels", spec.channels)));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fail(e.to_string()))?;
    if samples.is_empty() {
        return Err(fail("no samples".into()));
    }
    let w = Waveform::new(samples, spec.sample_rate)?;
    if spec.sample_rate == SAMPLE_RATE {
        return Ok(w);
    }
    match policy {
        ResamplePolicy::Reject => Err(Error::SampleRate { expected: SAMPLE_RATE, actual: spec.sample_rate }),
        ResamplePolicy::Linear => resample_linear(&w, SAMPLE_RATE),
    }
}

/// Linear-interpolation resampler.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.sample_rate() == target_rate {
        return Ok(w.clone());
    }
    let x = w.samples();
    let ratio = w.sample_rate() as f64 / target_rate as f64;
    let n = ((x.len() as f64) / ratio).round().max(1.0) as usize;
    let out = (0..n)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let a = x[j.min(x.len() - 1)];
            let b = x[(j + 1).min(x.len() - 1)];
            a + (b - a) * frac
        })
        .collect();
    Waveform::new(out, target_rate)
}

/// Writes 16-bit PCM mono. Samples outside [-1, 1] are clipped.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for &s in w.samples() {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
