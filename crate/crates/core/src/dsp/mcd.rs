use super::dtw::{euclidean, AlignmentPath};
use super::mfcc::MfccSequence;
use crate::error::Result;

/// `10·√2 / ln 10`: converts a cepstral Euclidean distance to decibels.
pub const MCD_ALPHA: f64 = 10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10;

/// Mean mel cepstral distortion (dB) over the frame pairs of `path`.
pub fn mcd(reference: &MfccSequence, synthesized: &MfccSequence, path: &AlignmentPath) -> Result<f64> {
    path.validate(reference.len(), synthesized.len())?;
    let total: f64 = path
        .pairs()
        .iter()
        .map(|&(i, j)| euclidean(&reference.frames()[i], &synthesized.frames()[j]))
        .sum();
    Ok(MCD_ALPHA * total / path.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::N_MFCC;

    #[test]
    fn alpha_value() {
        assert!((MCD_ALPHA - 6.141_851_463_713_754).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_path() {
        let a = MfccSequence::new(vec![[0.0; N_MFCC]; 3]).unwrap();
        let b = MfccSequence::new(vec![[0.0; N_MFCC]; 2]).unwrap();
        assert!(mcd(&a, &b, &AlignmentPath::diagonal(3)).is_err());
    }
}
