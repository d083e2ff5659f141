use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::nn::kernels::{pad_source, PadMode};

/// STFT and mel-filterbank settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub n_fft: usize,
    pub win_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            win_size: 1024,
            hop_size: 256,
            n_mels: 80,
            sample_rate: 22_050,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

/// Magnitude floor inside the square root (keeps the gradient of silent bins finite).
pub const MAGNITUDE_EPS: f64 = 1e-9;

impl MelConfig {
    /// The same analysis with the filterbank extended to Nyquist, as used by the reconstruction loss.
    pub fn full_band(&self) -> Self {
        Self { fmax: self.sample_rate as f64 / 2.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("mel config: {m}")));
        if !(self.hop_size >= 1 && self.hop_size <= self.win_size && self.win_size <= self.n_fft) {
            return bad("requires 1 <= hop_size <= win_size <= n_fft");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return bad("requires 0 <= fmin < fmax <= sample_rate / 2");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a signal of `len` samples under centred framing.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop_size + 1
    }

    /// Periodic Hann window of `win_size`, zero-padded (centred) to `n_fft`.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_size) / 2;
        for n in 0..self.win_size {
            let phase = 2.0 * std::f64::consts::PI * n as f64 / self.win_size as f64;
            w[offset + n] = 0.5 - 0.5 * phase.cos();
        }
        w
    }

    /// Slaney-scale, area-normalised triangular filterbank, `n_mels × n_bins` row-major.
    pub fn filterbank(&self) -> Vec<f64> {
        let n_bins = self.n_bins();
        let fft_freqs: Vec<f64> =
            (0..n_bins).map(|k| k as f64 * self.sample_rate as f64 / self.n_fft as f64).collect();
        let (lo, hi) = (hz_to_mel(self.fmin), hz_to_mel(self.fmax));
        let mel_f: Vec<f64> = (0..self.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (self.n_mels + 1) as f64))
            .collect();
        let mut fb = vec![0.0; self.n_mels * n_bins];
        for m in 0..self.n_mels {
            let (f0, f1, f2) = (mel_f[m], mel_f[m + 1], mel_f[m + 2]);
            let enorm = 2.0 / (f2 - f0);
            for (k, &f) in fft_freqs.iter().enumerate() {
                let lower = (f - f0) / (f1 - f0);
                let upper = (f2 - f) / (f2 - f1);
                fb[m * n_bins + k] = lower.min(upper).max(0.0) * enorm;
            }
        }
        fb
    }
}

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(f: f64) -> f64 {
    if f >= MIN_LOG_HZ {
        MIN_LOG_MEL + (f / MIN_LOG_HZ).ln() / log_step()
    } else {
        f / F_SP
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    if m >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (m - MIN_LOG_MEL)).exp()
    } else {
        F_SP * m
    }
}

/// Log-mel magnitudes, `n_mels × frames`, band-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    n_mels: usize,
    frames: usize,
    values: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(n_mels: usize, frames: usize, values: Vec<f32>) -> Result<Self> {
        if n_mels * frames != values.len() {
            return Err(Error::invalid(format!(
                "mel matrix {n_mels}x{frames} needs {} values, got {}",
                n_mels * frames,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mel spectrogram contains non-finite values"));
        }
        Ok(Self { n_mels, frames, values })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.frames + frame]
    }

    /// Frames `[start, start + len)`; frames past the end are an error.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<MelSpectrogram> {
        if start + len > self.frames {
            return Err(Error::invalid(format!("frame slice {start}+{len} exceeds {} frames", self.frames)));
        }
        let mut values = Vec::with_capacity(self.n_mels * len);
        for b in 0..self.n_mels {
            values.extend_from_slice(&self.values[b * self.frames + start..b * self.frames + start + len]);
        }
        Ok(Self { n_mels: self.n_mels, frames: len, values })
    }
}

/// Reusable STFT + filterbank analyser.
pub struct MelAnalyzer {
    cfg: MelConfig,
    window: Vec<f64>,
    filterbank: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelAnalyzer {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self { cfg: cfg.clone(), window: cfg.window(), filterbank: cfg.filterbank(), fft })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    fn check(&self, w: &Waveform) -> Result<()> {
        if w.is_empty() {
            return Err(Error::invalid("empty waveform"));
        }
        if w.sample_rate() != self.cfg.sample_rate {
            return Err(Error::SampleRate { expected: self.cfg.sample_rate, actual: w.sample_rate() });
        }
        Ok(())
    }

    /// STFT magnitudes `sqrt(re² + im² + eps)`, frame-major (`frames × n_bins`).
    pub fn magnitudes(&self, w: &Waveform) -> Result<(usize, Vec<f64>)> {
        self.check(w)?;
        let c = &self.cfg;
        let x = w.samples();
        let pad = c.n_fft / 2;
        let frames = c.frame_count(x.len());
        let n_bins = c.n_bins();
        let mut out = vec![0.0; frames * n_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); c.n_fft];
        for t in 0..frames {
            for (n, slot) in buf.iter_mut().enumerate() {
                let j = (t * c.hop_size + n) as isize - pad as isize;
                let s = pad_source(j, x.len(), PadMode::Reflect).map_or(0.0, |i| x[i]);
                *slot = Complex::new(s * self.window[n], 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..n_bins {
                out[t * n_bins + k] = (buf[k].norm_sqr() + MAGNITUDE_EPS).sqrt();
            }
        }
        Ok((frames, out))
    }

    /// Natural-log mel energies in double precision, band-major (`n_mels × frames`).
    pub fn log_mel_f64(&self, w: &Waveform) -> Result<(usize, Vec<f64>)> {
        let (frames, mags) = self.magnitudes(w)?;
        let c = &self.cfg;
        let n_bins = c.n_bins();
        let mut out = vec![0.0; c.n_mels * frames];
        for m in 0..c.n_mels {
            let fb = &self.filterbank[m * n_bins..(m + 1) * n_bins];
            for t in 0..frames {
                let e: f64 = fb.iter().zip(&mags[t * n_bins..(t + 1) * n_bins]).map(|(a, b)| a * b).sum();
                out[m * frames + t] = e.max(c.log_floor).ln();
            }
        }
        Ok((frames, out))
    }

    pub fn mel_spectrogram(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let (frames, v) = self.log_mel_f64(w)?;
        MelSpectrogram::new(self.cfg.n_mels, frames, v.into_iter().map(|x| x as f32).collect())
    }
}

/// Log-mel spectrogram of `w` under centred, reflection-padded framing.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(cfg)?.mel_spectrogram(w)
}
