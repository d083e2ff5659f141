//! Synthesis timing, MCD reports, listening-test assembly and the model summary table.

mod bench;
mod mcd_report;
mod mos;
mod synth;

pub use bench::{benchmark_csv, benchmark_table, training_speed, BenchEntry, BenchmarkRow, UNAVAILABLE};
pub use mcd_report::{
    mcd_report, mean_ci95, utterance_mcd, EvalPair, EvalReport, McdMode, UtteranceScore, CI95_ROW, MEAN_ROW,
};
pub use mos::{
    assemble_mos_set, MosItem, MosManifest, MosSource, VocoderOutputs, MOS_KINDS, MOS_ORIGINALS, MOS_SENTENCES,
    MOS_TOTAL,
};
pub use synth::{synthesize_set, SynthesisOutput};
