use super::mfcc::MfccSequence;
use crate::error::{Error, Result};

/// Monotone alignment between two sequences, from `(0, 0)` to both ends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    /// Checks the path invariants against sequence lengths `len_a`, `len_b`.
    pub fn new(pairs: Vec<(usize, usize)>, len_a: usize, len_b: usize) -> Result<Self> {
        let path = Self { pairs };
        path.validate(len_a, len_b)?;
        Ok(path)
    }

    /// `(0,0), (1,1), …` over `len` frames.
    pub fn diagonal(len: usize) -> Self {
        Self { pairs: (0..len).map(|i| (i, i)).collect() }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, len_a: usize, len_b: usize) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("invalid alignment path: {m}")));
        if len_a == 0 || len_b == 0 {
            return bad("empty sequence".into());
        }
        if self.pairs.first() != Some(&(0, 0)) {
            return bad("must start at (0, 0)".into());
        }
        if self.pairs.last() != Some(&(len_a - 1, len_b - 1)) {
            return bad(format!("must end at ({}, {})", len_a - 1, len_b - 1));
        }
        for w in self.pairs.windows(2) {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return bad(format!("illegal step {:?} -> {:?}", w[0], w[1]));
            }
        }
        Ok(())
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Result of [`dtw_align`]: the optimal path and its cumulative frame distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub path: AlignmentPath,
    pub cost: f64,
}

/// Dynamic time warping under steps {(1,0), (0,1), (1,1)} with Euclidean
/// frame distance. Ties prefer the diagonal step, then the step in `a`.
pub fn dtw_align(a: &MfccSequence, b: &MfccSequence) -> Result<Alignment> {
    dtw_frames(a.frames(), b.frames())
}

pub(crate) fn dtw_frames<const N: usize>(a: &[[f64; N]], b: &[[f64; N]]) -> Result<Alignment> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("dtw needs two non-empty sequences"));
    }
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = euclidean(&a[i], &b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = best + d;
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(Alignment { path: AlignmentPath { pairs }, cost: acc[n * m - 1] })
}

/// Cumulative Euclidean frame distance along `path`.
pub fn path_cost(a: &MfccSequence, b: &MfccSequence, path: &AlignmentPath) -> Result<f64> {
    path.validate(a.len(), b.len())?;
    Ok(path.pairs().iter().map(|&(i, j)| euclidean(&a.frames()[i], &b.frames()[j])).sum())
}
