use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{dtw_align, mcd, zscore_normalize, AlignmentPath, MelConfig, MfccAnalyzer, Waveform};
use crate::error::{Error, Result};

/// How synthesized frames are matched to reference frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum McdMode {
    /// Resynthesis from ground-truth mels: frames correspond one to one.
    #[serde(rename = "GT")]
    Gt,
    /// Synthesis from predicted mels: frames are aligned with DTW.
    #[serde(rename = "TTS")]
    Tts,
}

impl McdMode {
    pub const ALL: [McdMode; 2] = [McdMode::Gt, McdMode::Tts];

    pub fn name(self) -> &'static str {
        match self {
            McdMode::Gt => "GT",
            McdMode::Tts => "TTS",
        }
    }
}

impl fmt::Display for McdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for McdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GT" => Ok(McdMode::Gt),
            "TTS" => Ok(McdMode::Tts),
            _ => Err(Error::invalid(format!("unknown MCD mode {s:?} (expected GT or TTS)"))),
        }
    }
}

/// A reference utterance and its synthesized counterpart.
#[derive(Clone, Debug)]
pub struct EvalPair {
    pub utterance_id: String,
    pub reference: Waveform,
    pub synthesized: Waveform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub mcd_db: f64,
    /// Synthesis time, when known.
    pub seconds: Option<f64>,
    /// Number of aligned frame pairs.
    pub path_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: McdMode,
    pub per_utterance: Vec<UtteranceScore>,
    pub mean_mcd: f64,
    /// Half-width of the normal-approximation 95% interval of the mean.
    pub ci95: f64,
}

pub const MEAN_ROW: &str = "__mean__";
pub const CI95_ROW: &str = "__ci95__";

/// Mean and `1.96 · s / √n` with the sample standard deviation `s` (0 for a single value).
pub fn mean_ci95(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, 1.96 * var.sqrt() / n.sqrt()))
}

impl EvalReport {
    pub fn from_scores(mode: McdMode, per_utterance: Vec<UtteranceScore>) -> Result<Self> {
        let values: Vec<f64> = per_utterance.iter().map(|s| s.mcd_db).collect();
        let (mean_mcd, ci95) = mean_ci95(&values).map_err(|_| Error::invalid("report needs at least one utterance"))?;
        Ok(Self { mode, per_utterance, mean_mcd, ci95 })
    }

    /// Fills in synthesis times by utterance id.
    pub fn with_seconds(mut self, seconds: &std::collections::HashMap<String, f64>) -> Self {
        for s in &mut self.per_utterance {
            s.seconds = seconds.get(&s.utterance_id).copied().or(s.seconds);
        }
        self
    }

    /// `utterance_id,mcd_db,seconds,path_len` rows followed by the mean and
    /// the interval half-width as two summary rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["utterance_id", "mcd_db", "seconds", "path_len"]).map_err(csv_err)?;
        for s in &self.per_utterance {
            let secs = s.seconds.map(|v| format!("{v:.6}")).unwrap_or_default();
            w.write_record([s.utterance_id.as_str(), &format!("{:.6}", s.mcd_db), &secs, &s.path_len.to_string()])
                .map_err(csv_err)?;
        }
        w.write_record([MEAN_ROW, &format!("{:.6}", self.mean_mcd), "", ""]).map_err(csv_err)?;
        w.write_record([CI95_ROW, &format!("{:.6}", self.ci95), "", ""]).map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::records::write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// MCD of one pair: both signals are z-scored, converted to MFCCs and
/// matched along the diagonal (GT, trimmed to the shorter sequence) or a
/// DTW path (TTS).
pub fn utterance_mcd(
    analyzer: &MfccAnalyzer,
    reference: &Waveform,
    synthesized: &Waveform,
    mode: McdMode,
) -> Result<(f64, AlignmentPath)> {
    let r = analyzer.mfcc(&zscore_normalize(reference)?)?;
    let s = analyzer.mfcc(&zscore_normalize(synthesized)?)?;
    match mode {
        McdMode::Gt => {
            let n = r.len().min(s.len());
            let (r, s) = (r.truncated(n), s.truncated(n));
            let path = AlignmentPath::diagonal(n);
            Ok((mcd(&r, &s, &path)?, path))
        }
        McdMode::Tts => {
            let a = dtw_align(&r, &s)?;
            Ok((mcd(&r, &s, &a.path)?, a.path))
        }
    }
}

/// Per-utterance MCD with equal utterance weighting.
pub fn mcd_report(pairs: &[EvalPair], mode: McdMode, cfg: &MelConfig) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("no utterance pairs"));
    }
    let analyzer = MfccAnalyzer::new(cfg)?;
    let scores = pairs
        .par_iter()
        .map(|p| {
            let (value, path) = utterance_mcd(&analyzer, &p.reference, &p.synthesized, mode)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.utterance_id)))?;
            Ok(UtteranceScore { utterance_id: p.utterance_id.clone(), mcd_db: value, seconds: None, path_len: path.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(mode, scores)
}
