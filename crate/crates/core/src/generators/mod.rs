//! The six generators behind one interface, plus structural analysis
//! (parameter counts and receptive fields).

mod hifigan;
mod melgan;
mod proposed;
mod pwgan;
pub mod topology;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use hifigan::HifiGanConfig;
pub use melgan::{MelGanConfig, UmganConfig, VocGanConfig};
pub use proposed::{Proposed, ProposedConfig, ProposedProbe, ProposedTrace};
pub use pwgan::PwganConfig;
pub use topology::{Layer, Topology};

use crate::dsp::{MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Real, Tensor, Var};
use crate::records::{self, Record};

/// Total upsampling factor every generator must realise (the STFT hop).
pub const HOP_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    HifiganV2,
    Melgan,
    Pwgan,
    Umgan,
    Vocgan,
    Proposed,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 6] = [
        GeneratorKind::HifiganV2,
        GeneratorKind::Melgan,
        GeneratorKind::Pwgan,
        GeneratorKind::Umgan,
        GeneratorKind::Vocgan,
        GeneratorKind::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::HifiganV2 => "hifigan_v2",
            GeneratorKind::Melgan => "melgan",
            GeneratorKind::Pwgan => "pwgan",
            GeneratorKind::Umgan => "umgan",
            GeneratorKind::Vocgan => "vocgan",
            GeneratorKind::Proposed => "proposed",
        }
    }

    pub fn uses_noise(self) -> bool {
        matches!(self, GeneratorKind::Pwgan | GeneratorKind::Proposed)
    }

    /// Input-type label as used in benchmark tables.
    pub fn input_type(self) -> &'static str {
        if self.uses_noise() {
            "Gaussian noise (+ mel)"
        } else {
            "Mel spectrogram"
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "hifigan" && *k == GeneratorKind::HifiganV2))
            .ok_or_else(|| {
                let names: Vec<_> = GeneratorKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown generator kind {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    HifiganV2(HifiGanConfig),
    Melgan(MelGanConfig),
    Pwgan(PwganConfig),
    Umgan(UmganConfig),
    Vocgan(VocGanConfig),
    Proposed(ProposedConfig),
}

impl GeneratorConfig {
    pub fn default_for(kind: GeneratorKind) -> Self {
        match kind {
            GeneratorKind::HifiganV2 => GeneratorConfig::HifiganV2(HifiGanConfig::default()),
            GeneratorKind::Melgan => GeneratorConfig::Melgan(MelGanConfig::default()),
            GeneratorKind::Pwgan => GeneratorConfig::Pwgan(PwganConfig::default()),
            GeneratorKind::Umgan => GeneratorConfig::Umgan(UmganConfig::default()),
            GeneratorKind::Vocgan => GeneratorConfig::Vocgan(VocGanConfig::default()),
            GeneratorKind::Proposed => GeneratorConfig::Proposed(ProposedConfig::default()),
        }
    }

    /// Small configuration with the same topology family, for tests.
    pub fn tiny(kind: GeneratorKind, n_mels: usize) -> Self {
        match kind {
            GeneratorKind::HifiganV2 => GeneratorConfig::HifiganV2(HifiGanConfig::tiny(n_mels)),
            GeneratorKind::Melgan => GeneratorConfig::Melgan(MelGanConfig::tiny(n_mels)),
            GeneratorKind::Pwgan => GeneratorConfig::Pwgan(PwganConfig::tiny(n_mels)),
            GeneratorKind::Umgan => GeneratorConfig::Umgan(UmganConfig::tiny(n_mels)),
            GeneratorKind::Vocgan => GeneratorConfig::Vocgan(VocGanConfig::tiny(n_mels)),
            GeneratorKind::Proposed => GeneratorConfig::Proposed(ProposedConfig::tiny(n_mels)),
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorConfig::HifiganV2(_) => GeneratorKind::HifiganV2,
            GeneratorConfig::Melgan(_) => GeneratorKind::Melgan,
            GeneratorConfig::Pwgan(_) => GeneratorKind::Pwgan,
            GeneratorConfig::Umgan(_) => GeneratorKind::Umgan,
            GeneratorConfig::Vocgan(_) => GeneratorKind::Vocgan,
            GeneratorConfig::Proposed(_) => GeneratorKind::Proposed,
        }
    }

    pub fn n_mels(&self) -> usize {
        match self {
            GeneratorConfig::HifiganV2(c) => c.n_mels,
            GeneratorConfig::Melgan(c) => c.n_mels,
            GeneratorConfig::Pwgan(c) => c.n_mels,
            GeneratorConfig::Umgan(c) => c.n_mels,
            GeneratorConfig::Vocgan(c) => c.n_mels,
            GeneratorConfig::Proposed(c) => c.n_mels,
        }
    }

    /// Latent channels; 0 for mel-only kinds.
    pub fn noise_dim(&self) -> usize {
        match self {
            GeneratorConfig::Pwgan(c) => c.noise_dim,
            GeneratorConfig::Proposed(c) => c.noise_dim,
            _ => 0,
        }
    }

    pub fn upsample_rates(&self) -> &[usize] {
        match self {
            GeneratorConfig::HifiganV2(c) => &c.upsample_rates,
            GeneratorConfig::Melgan(c) => &c.ratios,
            GeneratorConfig::Pwgan(c) => &c.upsample_scales,
            GeneratorConfig::Umgan(c) => &c.ratios,
            GeneratorConfig::Vocgan(c) => &c.ratios,
            GeneratorConfig::Proposed(c) => &c.mel_upsample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels() == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        match self {
            GeneratorConfig::HifiganV2(c) => c.validate(),
            GeneratorConfig::Melgan(c) => c.validate(),
            GeneratorConfig::Pwgan(c) => c.validate(),
            GeneratorConfig::Umgan(c) => c.validate(),
            GeneratorConfig::Vocgan(c) => c.validate(),
            GeneratorConfig::Proposed(c) => c.validate(),
        }
    }

    /// Time-axis structure from one mel frame to output samples.
    pub fn topology(&self) -> Topology {
        match self {
            GeneratorConfig::HifiganV2(c) => c.topology(),
            GeneratorConfig::Melgan(c) => c.topology(),
            GeneratorConfig::Pwgan(c) => c.topology(),
            GeneratorConfig::Umgan(c) => c.topology(),
            GeneratorConfig::Vocgan(c) => c.topology(),
            GeneratorConfig::Proposed(c) => c.topology(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: GeneratorConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Stable hash of the configuration, stamped into checkpoints.
    pub fn hash(&self) -> String {
        crate::records::config_hash(self)
    }
}

pub(crate) fn check_hop(rates: &[usize]) -> Result<()> {
    if rates.is_empty() || rates.contains(&0) {
        return Err(Error::Config("upsampling rates must be non-empty and positive".into()));
    }
    let product: usize = rates.iter().product();
    if product != HOP_SIZE {
        return Err(Error::Config(format!("upsampling rates {rates:?} multiply to {product}, expected {HOP_SIZE}")));
    }
    Ok(())
}

pub(crate) fn lrelu<T: Real>(g: &mut Graph<T>, x: Var, slope: f64) -> Var {
    g.leaky_relu(x, T::from_f64_lossy(slope))
}

#[derive(Clone, Debug)]
enum Net {
    HifiGan(hifigan::HifiGan),
    MelGan(melgan::MelGanFamily),
    Pwgan(pwgan::Pwgan),
    Proposed(Proposed),
}

/// A built generator: configuration, parameters and layer handles.
#[derive(Clone, Debug)]
pub struct Generator<T: Real> {
    config: GeneratorConfig,
    store: ParamStore<T>,
    net: Net,
}

impl<T: Real> Generator<T> {
    /// Builds and initialises a generator; the same seed gives the same weights.
    pub fn build(config: &GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = match config {
            GeneratorConfig::HifiganV2(c) => Net::HifiGan(hifigan::HifiGan::build(c, &mut store, &mut rng)),
            GeneratorConfig::Melgan(c) => Net::MelGan(melgan::MelGanFamily::melgan(c, &mut store, &mut rng)),
            GeneratorConfig::Umgan(c) => Net::MelGan(melgan::MelGanFamily::umgan(c, &mut store, &mut rng)),
            GeneratorConfig::Vocgan(c) => Net::MelGan(melgan::MelGanFamily::vocgan(c, &mut store, &mut rng)),
            GeneratorConfig::Pwgan(c) => Net::Pwgan(pwgan::Pwgan::build(c, &mut store, &mut rng)),
            GeneratorConfig::Proposed(c) => Net::Proposed(Proposed::build(c, &mut store, &mut rng)),
        };
        Ok(Self { config: config.clone(), store, net })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn kind(&self) -> GeneratorKind {
        self.config.kind()
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn as_proposed(&self) -> Option<&Proposed> {
        match &self.net {
            Net::Proposed(p) => Some(p),
            _ => None,
        }
    }

    /// Shape of the latent for a batch of `frames`-frame mels.
    pub fn noise_shape(&self, batch: usize, frames: usize) -> Option<Vec<usize>> {
        match &self.config {
            GeneratorConfig::Pwgan(c) => Some(vec![batch, c.noise_dim, frames * HOP_SIZE]),
            GeneratorConfig::Proposed(c) => Some(vec![batch, c.noise_dim, frames]),
            _ => None,
        }
    }

    /// I.i.d. standard-normal latent, or `None` for mel-only kinds.
    pub fn sample_noise<R: Rng>(&self, rng: &mut R, batch: usize, frames: usize) -> Option<Tensor<T>> {
        self.noise_shape(batch, frames).map(|shape| {
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::from_f64_lossy(z)
                })
                .collect();
            Tensor::new(shape, data)
        })
    }

    /// Mel `[B, n_mels, T]` (plus the latent for noise kinds) to audio `[B, 1, 256·T]`.
    pub fn forward(&self, g: &mut Graph<T>, mel: Var, noise: Option<Var>) -> Result<Var> {
        let shape = g.shape(mel).to_vec();
        if shape.len() != 3 || shape[1] != self.config.n_mels() || shape[2] == 0 {
            return Err(Error::invalid(format!(
                "mel input must be [batch, {}, frames>0], got {shape:?}",
                self.config.n_mels()
            )));
        }
        if !g.value(mel).all_finite() {
            return Err(Error::invalid("mel input contains non-finite values"));
        }
        let expected = self.noise_shape(shape[0], shape[2]);
        let noise = match (expected, noise) {
            (None, None) => None,
            (Some(e), Some(n)) => {
                if g.shape(n) != e.as_slice() {
                    return Err(Error::invalid(format!("noise must have shape {e:?}, got {:?}", g.shape(n))));
                }
                if !g.value(n).all_finite() {
                    return Err(Error::invalid("noise contains non-finite values"));
                }
                Some(n)
            }
            (None, Some(_)) => return Err(Error::invalid(format!("{} takes no noise input", self.kind()))),
            (Some(_), None) => return Err(Error::invalid(format!("{} requires a noise input", self.kind()))),
        };
        let store = &self.store;
        Ok(match (&self.net, noise) {
            (Net::HifiGan(n), _) => n.forward(g, store, mel),
            (Net::MelGan(n), _) => n.forward(g, store, mel),
            (Net::Pwgan(n), Some(z)) => n.forward(g, store, mel, z),
            (Net::Proposed(n), Some(z)) => n.forward(g, store, mel, z),
            _ => unreachable!("noise presence checked above"),
        })
    }

    /// Inference on a single mel spectrogram.
    pub fn synthesize(&self, mel: &MelSpectrogram, noise: Option<&Tensor<T>>) -> Result<Waveform> {
        let mut g = Graph::new();
        let m = g.constant(mel_tensor(mel));
        let z = noise.map(|n| g.constant(n.clone()));
        let y = self.forward(&mut g, m, z)?;
        let out = g.value(y);
        if !out.all_finite() {
            return Err(Error::invalid("generator produced non-finite samples"));
        }
        Waveform::new(out.to_f64_vec(), crate::dsp::SAMPLE_RATE)
    }

    /// Copy in another precision.
    pub fn cast<U: Real>(&self) -> Generator<U> {
        Generator { config: self.config.clone(), store: self.store.cast(), net: self.net.clone() }
    }

    /// Flat `(name, shape, data)` records of every stored tensor.
    pub fn weight_records(&self) -> Vec<Record> {
        records::store_records(&self.store)
    }

    /// Writes weights as a `VWTS` record file.
    pub fn export_weights(&self, path: &std::path::Path) -> Result<()> {
        let header = serde_json::json!({
            "config": self.config,
            "config_hash": self.config.hash(),
            "parameter_count": self.parameter_count(),
        });
        records::write_file(path, records::WEIGHTS_MAGIC, &header, &self.weight_records())
    }

    /// Builds a generator from a weights file, taking the configuration from its header.
    pub fn from_weights(path: &std::path::Path) -> Result<Self> {
        let (header, _) = records::read_file(path, records::WEIGHTS_MAGIC)?;
        let config: GeneratorConfig = serde_json::from_value(header.get("config").cloned().unwrap_or_default())
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: format!("config: {e}") })?;
        let mut g = Self::build(&config, 0)?;
        g.import_weights(path)?;
        Ok(g)
    }

    /// Loads weights written by [`Generator::export_weights`] into this generator.
    pub fn import_weights(&mut self, path: &std::path::Path) -> Result<()> {
        let (header, recs) = records::read_file(path, records::WEIGHTS_MAGIC)?;
        let found = header.get("config_hash").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        if found != self.config.hash() {
            return Err(Error::HashMismatch { expected: self.config.hash(), found });
        }
        records::load_into_store(&mut self.store, &recs, path)
    }
}

/// `[1, n_mels, T]` tensor view of a mel spectrogram.
pub fn mel_tensor<T: Real>(mel: &MelSpectrogram) -> Tensor<T> {
    Tensor::new(
        vec![1, mel.n_mels(), mel.frames()],
        mel.values().iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
    )
}

/// Builds a single-precision generator.
pub fn build_generator(config: &GeneratorConfig, seed: u64) -> Result<Generator<f32>> {
    Generator::build(config, seed)
}

pub fn count_parameters<T: Real>(g: &Generator<T>) -> usize {
    g.parameter_count()
}

/// Output samples influenced by one input mel frame.
pub fn receptive_field(config: &GeneratorConfig) -> Result<usize> {
    config.validate()?;
    config.topology().receptive_field()
}

/// Receptive field of the proposed generator's residual stack, from one
/// sample at the first block's input to the output of block `block` (1-based).
pub fn block_receptive_field(config: &GeneratorConfig, block: usize) -> Result<usize> {
    let GeneratorConfig::Proposed(c) = config else {
        return Err(Error::Config("block receptive field is defined for the proposed generator only".into()));
    };
    config.validate()?;
    if block == 0 || block > c.blocks {
        return Err(Error::Config(format!("block {block} out of range 1..={}", c.blocks)));
    }
    c.block_topology(block).receptive_field()
}

/// Double-precision copy of `g` with every bias set to zero, so that a linearised forward pass
/// from zero inputs responds only to the injected impulse.
fn impulse_copy<T: Real>(g: &Generator<T>) -> Generator<f64> {
    let mut h = g.cast::<f64>();
    if let Net::MelGan(n) = &mut h.net {
        n.clear_input_offset();
    }
    let biases: Vec<usize> =
        h.store.iter().enumerate().filter(|(_, (name, _, _))| name.ends_with(".bias")).map(|(i, _)| i).collect();
    for i in biases {
        let id = h.store.id_at(i);
        let t = h.store.tensor_mut(id);
        *t = Tensor::zeros(t.shape().to_vec());
    }
    h
}

/// First and last time index (over all channels) with a nonzero value.
fn nonzero_span<T: Real>(t: &Tensor<T>) -> Option<(usize, usize, usize)> {
    let (_, _, l) = t.dims3();
    let mut lo = usize::MAX;
    let mut hi = 0;
    for (i, v) in t.data().iter().enumerate() {
        if *v != T::zero() {
            lo = lo.min(i % l);
            hi = hi.max(i % l);
        }
    }
    (lo != usize::MAX).then_some((lo, hi, l))
}

const MAX_PROBE_FRAMES: usize = 2048;

/// Grows the probe length until the measured span sits well inside the signal.
fn probe_until_interior(mut frames: usize, mut run: impl FnMut(usize) -> Result<Option<(usize, usize, usize)>>) -> Result<usize> {
    loop {
        if let Some((lo, hi, len)) = run(frames)? {
            let span = hi - lo + 1;
            if lo >= span && len - 1 - hi >= span {
                return Ok(span);
            }
        }
        frames *= 2;
        if frames > MAX_PROBE_FRAMES {
            return Err(Error::invalid("receptive field probe did not converge"));
        }
    }
}

/// Measures the receptive field by impulse response: a linearised copy of
/// the network (pointwise nonlinearities replaced by the identity, biases
/// and latent set to zero) is fed a mel input that is zero except for one
/// frame, and the span of nonzero output samples is reported.
pub fn probe_receptive_field_empirical<T: Real>(g: &Generator<T>) -> Result<usize> {
    let h = impulse_copy(g);
    let n_mels = g.config.n_mels();
    probe_until_interior(8, |frames| {
        let mut mel = vec![0.0; n_mels * frames];
        for m in 0..n_mels {
            mel[m * frames + frames / 2] = 1.0;
        }
        let mut graph = Graph::linearized();
        let m = graph.constant(Tensor::from_f64(vec![1, n_mels, frames], &mel));
        let z = h.noise_shape(1, frames).map(|s| graph.constant(Tensor::zeros(s)));
        let y = h.forward(&mut graph, m, z)?;
        Ok(nonzero_span(graph.value(y)))
    })
}

/// Empirical counterpart of [`block_receptive_field`]: an impulse at one
/// sample of the first block's input, measured at the output of block `block`.
pub fn probe_block_receptive_field<T: Real>(g: &Generator<T>, block: usize) -> Result<usize> {
    if g.as_proposed().is_none() {
        return Err(Error::Config("block probe is defined for the proposed generator only".into()));
    }
    let h = impulse_copy(g);
    let p = h.as_proposed().expect("checked above");
    let c = p.config();
    if block == 0 || block > c.blocks {
        return Err(Error::Config(format!("block {block} out of range 1..={}", c.blocks)));
    }
    probe_until_interior(4, |frames| {
        let len = frames * HOP_SIZE;
        let mut x0 = vec![0.0; c.channels * len];
        for ch in 0..c.channels {
            x0[ch * len + len / 2] = 1.0;
        }
        let mut graph = Graph::linearized();
        let m = graph.constant(Tensor::zeros(vec![1, c.n_mels, frames]));
        let z = graph.constant(Tensor::zeros(vec![1, c.noise_dim, frames]));
        let x0 = graph.constant(Tensor::from_f64(vec![1, c.channels, len], &x0));
        let probe = ProposedProbe { x0: Some(x0), ..Default::default() };
        let trace = p.trace(&mut graph, &h.store, m, z, &probe);
        Ok(nonzero_span(graph.value(trace.block_outputs[block - 1])))
    })
}
