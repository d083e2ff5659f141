use crate::error::{Error, Result};

/// Sample rate used throughout the workbench.
pub const SAMPLE_RATE: u32 = 22_050;

/// Mono audio signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_f32(samples: &[f32], sample_rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&v| v as f64).collect(), sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_f32(&self) -> Vec<f32> {
        self.samples.iter().map(|&v| v as f32).collect()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples `[start, start + len)`, zero-padded past the end.
    pub fn slice_padded(&self, start: usize, len: usize) -> Waveform {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let end = (start + len).min(self.samples.len());
            out[..end - start].copy_from_slice(&self.samples[start..end]);
        }
        Waveform { samples: out, sample_rate: self.sample_rate }
    }

    /// Same signal with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform { samples: self.samples.iter().map(|v| v * gain).collect(), sample_rate: self.sample_rate }
    }

    /// Root-mean-square level in dB relative to full scale (0 dBFS = RMS of 1).
    pub fn rms_dbfs(&self) -> f64 {
        20.0 * rms(&self.samples).log10()
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
