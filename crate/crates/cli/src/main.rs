//! `voclab`: prepare data, train, synthesize, evaluate, benchmark and plot.

mod bench;
mod config;
mod data;
mod eval;
mod plot;
mod provenance;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use voclab::dsp::ResamplePolicy;
use voclab::evaluation::McdMode;
use voclab::generators::GeneratorKind;

use crate::config::RunConfig;

/// Environment variable selecting the compute device.
pub const DEVICE_ENV: &str = "VOCLAB_DEVICE";

/// Marks an error as caused by the invocation or configuration (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "voclab", version, about = "Train and compare GAN vocoders")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set train.max_steps=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic LJSpeech-layout corpus for smoke tests.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Build the dataset manifest and the mel cache.
    Prepare,
    /// Train one generator against the shared discriminator.
    Train {
        #[arg(long, value_parser = parse_kind)]
        kind: GeneratorKind,
        /// Continue from the checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Synthesize one WAV per input mel or WAV file.
    Synth {
        /// Training checkpoint or exported weights.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "wavs", required_unless_present = "wavs")]
        mels: Option<PathBuf>,
        /// WAV inputs, analysed into mels first.
        #[arg(long)]
        wavs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Noise seed for latent-input generators.
        #[arg(long)]
        seed: Option<u64>,
        /// Resample WAV inputs that are not at 22050 Hz instead of rejecting them.
        #[arg(long)]
        resample: bool,
    },
    /// Score synthesized WAVs against references with MCD.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        syn: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: McdMode,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Resample WAVs that are not at 22050 Hz instead of rejecting them.
        #[arg(long)]
        resample: bool,
    },
    /// Plot mel L1 curves from metric logs.
    Plot {
        /// Output SVG.
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Tabulate parameter counts and training and synthesis speed.
    Bench {
        /// Checkpoints or weight files; all six kinds from the config when omitted.
        #[arg(long, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        mels: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble and export the listening-test set.
    Mos {
        /// Directory laid out as `<kind>/<gt|tts>/<utterance>.wav`.
        #[arg(long)]
        outputs: PathBuf,
        /// Directory of original recordings.
        #[arg(long)]
        originals: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract generator weights from a training checkpoint.
    ExportWeights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<GeneratorKind, String> {
    s.parse().map_err(|e: voclab::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<McdMode, String> {
    s.parse().map_err(|e: voclab::Error| e.to_string())
}

fn wav_policy(resample: bool) -> ResamplePolicy {
    if resample {
        ResamplePolicy::Linear
    } else {
        ResamplePolicy::Reject
    }
}

fn check_device() -> anyhow::Result<()> {
    match std::env::var(DEVICE_ENV) {
        Ok(d) if !d.eq_ignore_ascii_case("cpu") => Err(usage(format!("{DEVICE_ENV}={d}: only \"cpu\" is available"))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    check_device()?;
    if let Command::Fixture { out, count, seconds, seed } = &cli.command {
        return data::fixture(out, *count, *seconds, *seed);
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Fixture { .. } => unreachable!(),
        Command::Prepare => data::prepare(&cfg),
        Command::Train { kind, resume } => train::run(&cfg, kind, resume),
        Command::Synth { checkpoint, mels, wavs, out, seed, resample } => {
            let input = match (mels, wavs) {
                (Some(m), _) => synth::Input::Mels(m),
                (None, Some(w)) => synth::Input::Wavs(w),
                (None, None) => unreachable!("clap requires one input"),
            };
            synth::run(&cfg, &checkpoint, input, &out, seed, wav_policy(resample))
        }
        Command::Eval { reference, syn, mode, out, resample } => {
            eval::run(&cfg, &reference, &syn, mode, &out, wav_policy(resample))
        }
        Command::Plot { out, logs } => plot::run(&logs, &out),
        Command::Bench { checkpoints, mels, out } => bench::run(&cfg, &checkpoints, &mels, &out),
        Command::Mos { outputs, originals, out } => eval::mos(&cfg, &outputs, &originals, &out),
        Command::ExportWeights { checkpoint, out } => synth::export_weights(&cfg, &checkpoint, &out),
    }
}

/// 2 for usage and configuration errors, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let config_error = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<voclab::Error>(),
                Some(voclab::Error::Config(_) | voclab::Error::HashMismatch { .. })
            )
    });
    if config_error {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
