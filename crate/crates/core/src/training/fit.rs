use std::path::PathBuf;

use super::metrics::{append_log, LogRecord};
use super::state::{TrainState, ValidationPoint};
use crate::datasets::{BatchSchedule, Utterance};
use crate::dsp::MelAnalyzer;
use crate::error::Result;

/// Where the loop writes its outputs.
#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    pub metric_log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitSummary {
    pub steps: u64,
    /// Mean wall-clock time of the training steps, excluding validation and checkpointing.
    pub mean_seconds_per_batch: f64,
    pub last_validation: Option<f64>,
}

/// Trains until `state.config().max_steps`, validating and checkpointing at
/// the configured intervals. Batches follow [`BatchSchedule`] so a resumed run
/// sees the same data as an uninterrupted one.
pub fn fit(state: &mut TrainState<f32>, train: &[Utterance], val: &[Utterance], opts: &FitOptions) -> Result<FitSummary> {
    let cfg = state.config().clone();
    let analyzer = MelAnalyzer::new(&state.setup.mel)?;
    let schedule = BatchSchedule::new(cfg.seed, train.len(), cfg.batch_size)?;
    let (mut steps, mut busy) = (0u64, 0.0);
    let mut last_validation = None;
    while state.step < cfg.max_steps {
        let batch = schedule.batch(state.step, train, cfg.segment_samples, &analyzer)?;
        let m = state.train_step(&batch)?;
        steps += 1;
        busy += m.seconds_per_batch;
        if let Some(p) = &opts.metric_log {
            append_log(p, &LogRecord::Step(m))?;
        }
        if m.step % 100 == 0 {
            log::info!(
                "step {} epoch {} d {:.4} adv {:.4} fm {:.4} mel {:.4} ({:.3}s)",
                m.step, m.epoch, m.loss_d, m.loss_g_adv, m.loss_fm, m.loss_mel, m.seconds_per_batch
            );
        }
        let done = state.step >= cfg.max_steps;
        if !val.is_empty() && cfg.validation_interval > 0 && (state.step % cfg.validation_interval == 0 || done) {
            let v = state.validate(val)?;
            state.record_validation(v);
            last_validation = Some(v);
            log::info!("step {} validation mel L1 {v:.4}", state.step);
            if let Some(p) = &opts.metric_log {
                append_log(p, &LogRecord::Validation(ValidationPoint { step: state.step, mel_l1: v }))?;
            }
        }
        if let Some(p) = &opts.checkpoint {
            if done || (cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0) {
                state.save_checkpoint(p)?;
            }
        }
    }
    let mean = if steps > 0 { busy / steps as f64 } else { 0.0 };
    Ok(FitSummary { steps, mean_seconds_per_batch: mean, last_validation })
}
