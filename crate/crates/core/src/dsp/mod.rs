//! Waveforms, mel and cepstral analysis, alignment and distortion measures.

mod dtw;
mod mcd;
mod mel;
mod melfile;
mod mfcc;
mod normalize;
mod wav;
mod waveform;

pub use dtw::{dtw_align, path_cost, Alignment, AlignmentPath};
pub use mcd::{mcd, MCD_ALPHA};
pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelAnalyzer, MelConfig, MelSpectrogram, MAGNITUDE_EPS};
pub use melfile::{decode_mel, encode_mel, read_mel, write_mel, MEL_MAGIC};
pub use mfcc::{mfcc, MfccAnalyzer, MfccSequence, N_MFCC};
pub use normalize::{normalize_loudness, zscore_normalize, LoudnessNormalized, DEFAULT_LOUDNESS_DB};
pub use wav::{read_wav, resample_linear, write_wav, ResamplePolicy};
pub use waveform::{Waveform, SAMPLE_RATE};
