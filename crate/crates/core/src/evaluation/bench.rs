use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::synthesize_set;
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::generators::{Generator, GeneratorKind};
use crate::training::{read_log, LogRecord};

/// One row of the model summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub kind: GeneratorKind,
    pub params: usize,
    /// Mean training seconds per batch from the metric log; `None` when no log is available.
    pub s_per_batch: Option<f64>,
    /// Mean synthesis seconds per utterance.
    pub s_per_sample: Option<f64>,
    pub input_type: String,
}

pub struct BenchEntry<'a> {
    pub generator: &'a Generator<f32>,
    pub metric_log: Option<&'a Path>,
}

/// Mean `seconds_per_batch` over the step records of a metric log.
pub fn training_speed(log: &Path) -> Result<Option<f64>> {
    let steps: Vec<f64> = read_log(log)?
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::Step(m) => Some(m.seconds_per_batch),
            LogRecord::Validation(_) => None,
        })
        .collect();
    Ok((!steps.is_empty()).then(|| steps.iter().sum::<f64>() / steps.len() as f64))
}

/// Parameter counts, training speed from each log and synthesis speed over `mels`.
/// A missing or unreadable log leaves the training-speed cell empty.
pub fn benchmark_table(entries: &[BenchEntry<'_>], mels: &[MelSpectrogram], seed: u64) -> Result<Vec<BenchmarkRow>> {
    if entries.is_empty() {
        return Err(Error::invalid("no generators to benchmark"));
    }
    entries
        .iter()
        .map(|e| {
            let kind = e.generator.kind();
            let s_per_batch = match e.metric_log {
                Some(p) => training_speed(p).unwrap_or_else(|err| {
                    log::warn!("{kind}: training speed unavailable ({err})");
                    None
                }),
                None => None,
            };
            let synth = synthesize_set(e.generator, mels, seed)?;
            Ok(BenchmarkRow {
                kind,
                params: e.generator.parameter_count(),
                s_per_batch,
                s_per_sample: Some(synth.mean_seconds()),
                input_type: kind.input_type().to_string(),
            })
        })
        .collect()
}

pub const UNAVAILABLE: &str = "unavailable";

/// `kind,params,s_per_batch,s_per_sample,input_type`; missing values read "unavailable".
pub fn benchmark_csv(rows: &[BenchmarkRow]) -> Result<String> {
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "params", "s_per_batch", "s_per_sample", "input_type"]).map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map_or(UNAVAILABLE.to_string(), |v| format!("{v:.6}"));
    for r in rows {
        w.write_record([
            r.kind.name().to_string(),
            r.params.to_string(),
            cell(r.s_per_batch),
            cell(r.s_per_sample),
            r.input_type.clone(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
