use std::path::Path;

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

pub const MEL_MAGIC: &[u8; 4] = b"MEL1";

/// `MEL1`, u32 n_mels, u32 frames, then band-major f32 values (all little-endian).
pub fn encode_mel(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * mel.values().len());
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&(mel.n_mels() as u32).to_le_bytes());
    out.extend_from_slice(&(mel.frames() as u32).to_le_bytes());
    for v in mel.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mel(bytes: &[u8], path: &Path) -> Result<MelSpectrogram> {
    let fail = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 12 || &bytes[..4] != MEL_MAGIC {
        return Err(fail("missing MEL1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n_mels, frames) = (word(4), word(8));
    let expected = n_mels.checked_mul(frames).and_then(|n| n.checked_mul(4)).and_then(|n| n.checked_add(12));
    if expected != Some(bytes.len()) {
        return Err(fail("payload length does not match header"));
    }
    let values = bytes[12..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    MelSpectrogram::new(n_mels, frames, values).map_err(|e| fail(&e.to_string()))
}

pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    std::fs::write(path, encode_mel(mel)).map_err(|e| Error::io(path, e))
}

pub fn read_mel(path: &Path) -> Result<MelSpectrogram> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mel(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mel = MelSpectrogram::new(3, 2, vec![0.5, -1.0, 2.0, 3.0, -11.5, 0.0]).unwrap();
        let bytes = encode_mel(&mel);
        assert_eq!(&bytes[..4], b"MEL1");
        assert_eq!(decode_mel(&bytes, Path::new("x")).unwrap(), mel);
        assert!(decode_mel(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        assert!(decode_mel(b"MEL2\0\0\0\0\0\0\0\0", Path::new("x")).is_err());
    }
}
