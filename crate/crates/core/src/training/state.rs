use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{lr_at, TrainConfig};
use super::frontend::MelFrontend;
use super::losses::{discriminator_loss, feature_matching_loss, generator_adversarial_loss, mel_l1_with};
use crate::datasets::{TrainingSegment, Utterance};
use crate::discriminators::{Discriminator, DiscriminatorConfig};
use crate::dsp::{MelAnalyzer, MelConfig, Waveform};
use crate::error::{Error, Result};
use crate::generators::{mel_tensor, Generator, GeneratorConfig, HOP_SIZE};
use crate::nn::{AdamW, Graph, Real, Tensor};

/// Everything that determines the networks and the optimisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSetup {
    pub train: TrainConfig,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub mel: MelConfig,
}

impl TrainSetup {
    pub fn new(generator: GeneratorConfig) -> Self {
        Self { train: TrainConfig::default(), generator, discriminator: Default::default(), mel: Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.mel.validate()?;
        if self.generator.n_mels() != self.mel.n_mels {
            return Err(Error::Config(format!(
                "generator expects {} mel bands, the analysis produces {}",
                self.generator.n_mels(),
                self.mel.n_mels
            )));
        }
        if self.mel.hop_size != HOP_SIZE {
            return Err(Error::Config(format!("hop size must be {HOP_SIZE}, got {}", self.mel.hop_size)));
        }
        let seg = self.train.segment_samples;
        if seg % HOP_SIZE != 0 || seg <= self.mel.n_fft / 2 {
            return Err(Error::Config(format!(
                "segment_samples {seg} must be a multiple of {HOP_SIZE} longer than {}",
                self.mel.n_fft / 2
            )));
        }
        Ok(())
    }

    /// Hashes that a checkpoint must match to be resumed. Run-length and
    /// reporting intervals are excluded so that a run can be extended.
    pub fn hashes(&self) -> SetupHashes {
        let optim = TrainConfig { max_steps: 1, validation_interval: 0, checkpoint_interval: 0, ..self.train.clone() };
        SetupHashes {
            generator: self.generator.hash(),
            discriminator: self.discriminator.hash(),
            mel: crate::records::config_hash(&self.mel),
            train: optim.hash(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupHashes {
    pub generator: String,
    pub discriminator: String,
    pub mel: String,
    pub train: String,
}

/// Losses of one training step. `loss_fm` and `loss_mel` are unweighted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Completed steps, this one included.
    pub step: u64,
    pub epoch: u64,
    pub loss_d: f64,
    pub loss_g_adv: f64,
    pub loss_fm: f64,
    pub loss_mel: f64,
    pub lr: f64,
    pub seconds_per_batch: f64,
}

impl StepMetrics {
    /// True when every loss of `self` and `other` agrees bit for bit.
    pub fn same_losses(&self, other: &StepMetrics) -> bool {
        let bits = |m: &StepMetrics| {
            [m.loss_d, m.loss_g_adv, m.loss_fm, m.loss_mel, m.lr].map(f64::to_bits)
        };
        self.step == other.step && bits(self) == bits(other)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: u64,
    pub mel_l1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricHistory {
    pub steps: Vec<StepMetrics>,
    pub validation: Vec<ValidationPoint>,
}

const NOISE_STREAM_KEY: u64 = 0x6e6f_6973_655f_7267;
const VALIDATION_KEY: u64 = 0x7661_6c69_6461_7465;

/// Networks, optimiser moments, counters and random state of one run.
#[derive(Clone, Debug)]
pub struct TrainState<T: Real> {
    pub setup: TrainSetup,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: AdamW<T>,
    pub opt_d: AdamW<T>,
    pub step: u64,
    pub epoch: u64,
    pub steps_per_epoch: u64,
    /// Source of the latent noise fed to noise-driven generators.
    pub rng: ChaCha8Rng,
    pub history: MetricHistory,
    frontend: MelFrontend<T>,
}

/// `[B, 1, L]` audio and `[B, n_mels, F]` mel tensors of a batch.
pub fn collate<T: Real>(batch: &[TrainingSegment]) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = batch.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (len, n_mels, frames) = (first.audio.len(), first.mel.n_mels(), first.mel.frames());
    let mut audio = Vec::with_capacity(batch.len() * len);
    let mut mel = Vec::with_capacity(batch.len() * n_mels * frames);
    for s in batch {
        if s.audio.len() != len || s.mel.n_mels() != n_mels || s.mel.frames() != frames {
            return Err(Error::invalid(format!("segment {} does not match the batch layout", s.source_id)));
        }
        audio.extend(s.audio.samples().iter().map(|&v| T::from_f64_lossy(v)));
        mel.extend_from_slice(mel_tensor::<T>(&s.mel).data());
    }
    Ok((Tensor::new(vec![batch.len(), 1, len], audio), Tensor::new(vec![batch.len(), n_mels, frames], mel)))
}

impl<T: Real> TrainState<T> {
    /// Fresh networks and optimisers. `n_train` sets the epoch length.
    pub fn new(setup: TrainSetup, n_train: usize) -> Result<Self> {
        setup.validate()?;
        if n_train == 0 {
            return Err(Error::invalid("training set is empty"));
        }
        let seed = setup.train.seed;
        let generator = Generator::build(&setup.generator, seed)?;
        let discriminator = Discriminator::build(&setup.discriminator, seed.wrapping_add(1))?;
        let adam = setup.train.adamw();
        let opt_g = AdamW::new(adam, generator.store());
        let opt_d = AdamW::new(adam, discriminator.store());
        let frontend = MelFrontend::new(&setup.mel.full_band())?;
        Ok(Self {
            steps_per_epoch: n_train.div_ceil(setup.train.batch_size) as u64,
            setup,
            generator,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM_KEY),
            history: MetricHistory::default(),
            frontend,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.setup.train
    }

    pub fn lr(&self) -> f64 {
        lr_at(self.epoch, &self.setup.train)
    }

    fn non_finite(&self, what: &str, batch: &[TrainingSegment]) -> Error {
        let ids: Vec<String> = batch.iter().map(|s| s.source_id.clone()).collect();
        log::error!("non-finite {what} at step {}; batch: {ids:?}", self.step);
        Error::NonFinite { what: what.into(), step: self.step, ids }
    }

    /// One discriminator update on the detached generator output followed
    /// by one generator update against the refreshed discriminator.
    pub fn train_step(&mut self, batch: &[TrainingSegment]) -> Result<StepMetrics> {
        let started = Instant::now();
        let cfg = self.setup.train.clone();
        if batch.len() != cfg.batch_size {
            return Err(Error::invalid(format!("batch of {} segments, expected {}", batch.len(), cfg.batch_size)));
        }
        let (audio, mel) = collate::<T>(batch)?;
        let frames = mel.shape()[2];
        let lr = self.lr();
        let noise = self.generator.sample_noise(&mut self.rng, batch.len(), frames);

        let mut g = Graph::new();
        g.freeze(self.discriminator.store());
        let mel_v = g.constant(mel);
        let noise_v = noise.map(|n| g.constant(n));
        let y_hat = self.generator.forward(&mut g, mel_v, noise_v)?;

        self.discriminator.refresh_spectral_norm();
        let (loss_d, d_grads) = {
            let mut gd = Graph::new();
            let real = gd.constant(audio.clone());
            let fake = gd.constant(g.value(y_hat).clone());
            let dr = self.discriminator.discriminate(&mut gd, real)?;
            let df = self.discriminator.discriminate(&mut gd, fake)?;
            let loss = discriminator_loss(&mut gd, &dr.logits, &df.logits)?;
            (gd.scalar_value(loss).to_f64_lossy(), gd.backward(loss))
        };
        if !loss_d.is_finite() {
            return Err(self.non_finite("discriminator loss", batch));
        }
        self.opt_d.step(self.discriminator.store_mut(), &d_grads, lr);
        drop(d_grads);

        self.discriminator.refresh_spectral_norm();
        let real = g.constant(audio);
        let dr = self.discriminator.discriminate(&mut g, real)?;
        let df = self.discriminator.discriminate(&mut g, y_hat)?;
        let adv = generator_adversarial_loss(&mut g, &df.logits)?;
        let fm = feature_matching_loss(&mut g, &dr.features, &df.features)?;
        let mel_l1 = self.frontend.l1(&mut g, real, y_hat);
        let fm_w = g.scale(fm, T::from_f64_lossy(cfg.lambda_fm));
        let mel_w = g.scale(mel_l1, T::from_f64_lossy(cfg.lambda_mel));
        let total = g.sum_all(&[adv, fm_w, mel_w]);
        let values = [adv, fm, mel_l1].map(|v| g.scalar_value(v).to_f64_lossy());
        if !g.scalar_value(total).to_f64_lossy().is_finite() || !values.iter().all(|v| v.is_finite()) {
            return Err(self.non_finite("generator loss", batch));
        }
        let grads = g.backward(total);
        self.opt_g.step(self.generator.store_mut(), &grads, lr);

        let metrics = StepMetrics {
            step: self.step + 1,
            epoch: self.epoch,
            loss_d,
            loss_g_adv: values[0],
            loss_fm: values[1],
            loss_mel: values[2],
            lr,
            seconds_per_batch: started.elapsed().as_secs_f64(),
        };
        self.step += 1;
        self.epoch = self.step / self.steps_per_epoch;
        self.history.steps.push(metrics);
        Ok(metrics)
    }

    /// Mean mel L1 over full validation utterances, each synthesised from its
    /// ground-truth mel and trimmed to the reference length. Noise is drawn
    /// from a fixed seed so repeated calls agree.
    pub fn validate(&self, set: &[Utterance]) -> Result<f64> {
        let analyzer = MelAnalyzer::new(&self.setup.mel.full_band())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.setup.train.seed ^ VALIDATION_KEY);
        validate_with(set, &analyzer, |u| {
            let noise = self.generator.sample_noise(&mut rng, 1, u.mel.frames());
            self.generator.synthesize(&u.mel, noise.as_ref())
        })
    }

    pub fn record_validation(&mut self, mel_l1: f64) {
        self.history.validation.push(ValidationPoint { step: self.step, mel_l1 });
    }
}

/// Mean mel L1 between each reference utterance and `synth(utterance)`
/// trimmed (or zero-padded) to the reference length.
pub fn validate_with(
    set: &[Utterance],
    analyzer: &MelAnalyzer,
    mut synth: impl FnMut(&Utterance) -> Result<Waveform>,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let mut total = 0.0;
    for u in set {
        let y = synth(u)?.slice_padded(0, u.audio.len());
        total += mel_l1_with(analyzer, &u.audio, &y)?;
    }
    Ok(total / set.len() as f64)
}
