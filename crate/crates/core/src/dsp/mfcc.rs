use super::mel::{MelAnalyzer, MelConfig};
use super::waveform::Waveform;
use crate::error::{Error, Result};

/// Cepstral coefficients kept per frame (c1..c13; c0 is dropped).
pub const N_MFCC: usize = 13;

/// `T × 13` cepstral coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccSequence {
    frames: Vec<[f64; N_MFCC]>,
}

impl MfccSequence {
    pub fn new(frames: Vec<[f64; N_MFCC]>) -> Result<Self> {
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MFCC sequence contains non-finite values"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[[f64; N_MFCC]] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// First `len` frames.
    pub fn truncated(&self, len: usize) -> MfccSequence {
        MfccSequence { frames: self.frames[..len.min(self.frames.len())].to_vec() }
    }
}

/// Orthonormal DCT-II basis row `k` for length `n`.
fn dct_row(k: usize, n: usize) -> Vec<f64> {
    let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    (0..n)
        .map(|i| scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

pub struct MfccAnalyzer {
    mel: MelAnalyzer,
    basis: Vec<Vec<f64>>,
}

impl MfccAnalyzer {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        let mel = MelAnalyzer::new(cfg)?;
        let basis = (1..=N_MFCC).map(|k| dct_row(k, cfg.n_mels)).collect();
        Ok(Self { mel, basis })
    }

    pub fn mfcc(&self, w: &Waveform) -> Result<MfccSequence> {
        let (frames, logmel) = self.mel.log_mel_f64(w)?;
        let n_mels = self.mel.config().n_mels;
        let out = (0..frames)
            .map(|t| {
                let mut c = [0.0; N_MFCC];
                for (k, row) in self.basis.iter().enumerate() {
                    c[k] = (0..n_mels).map(|m| row[m] * logmel[m * frames + t]).sum();
                }
                c
            })
            .collect();
        MfccSequence::new(out)
    }
}

/// MFCCs c1..c13 from the orthonormal DCT-II of the log-mel frames.
pub fn mfcc(w: &Waveform, cfg: &MelConfig) -> Result<MfccSequence> {
    MfccAnalyzer::new(cfg)?.mfcc(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_spectrogram, SAMPLE_RATE};

    #[test]
    fn silence_gives_constant_frames() {
        let m = mfcc(&Waveform::silence(5000, SAMPLE_RATE), &MelConfig::default()).unwrap();
        assert!(m.frames().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn frame_count_matches_mel() {
        let w = Waveform::new((0..7001).map(|i| ((i as f64) * 0.01).sin() * 0.3).collect(), SAMPLE_RATE).unwrap();
        let cfg = MelConfig::default();
        assert_eq!(mfcc(&w, &cfg).unwrap().len(), mel_spectrogram(&w, &cfg).unwrap().frames());
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let n = 80;
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = dct_row(a, n).iter().zip(dct_row(b, n)).map(|(x, y)| x * y).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}
