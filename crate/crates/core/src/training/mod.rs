//! Losses, optimiser schedule, the adversarial training step, validation,
//! checkpoints and the metric log.

mod checkpoint;
mod config;
mod fit;
mod frontend;
mod losses;
mod metrics;
mod state;

pub use checkpoint::read_checkpoint_setup;
pub use config::{lr_at, TrainConfig};
pub use fit::{fit, FitOptions, FitSummary};
pub use frontend::MelFrontend;
pub use losses::{
    adversarial_losses, discriminator_loss, feature_matching_loss, generator_adversarial_loss, mel_l1_loss,
};
pub use metrics::{append_log, read_log, LogRecord};
pub use state::{
    collate, validate_with, MetricHistory, SetupHashes, StepMetrics, TrainSetup, TrainState, ValidationPoint,
};
