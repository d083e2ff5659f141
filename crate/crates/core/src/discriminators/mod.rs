//! The shared multi-resolution discriminator: a multi-period branch and a
//! multi-scale branch, both looking only at the final waveform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvOptions, Graph, Init, Norm, PadMode, ParamStore, Real, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpdConfig {
    pub periods: Vec<usize>,
    /// Output channels of the strided convolutions; the last one uses stride 1.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub post_kernel_size: usize,
    /// Padding used to extend the signal to a multiple of the period.
    pub pad_mode: PadMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdLayer {
    pub channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub groups: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdConfig {
    pub scales: usize,
    pub layers: Vec<MsdLayer>,
    pub post_kernel_size: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub pool_padding: usize,
    /// The first (full-resolution) sub-discriminator uses spectral instead of weight normalisation.
    pub spectral_norm_first: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub leaky_slope: f64,
    pub mpd: MpdConfig,
    pub msd: MsdConfig,
}

const fn layer(channels: usize, kernel_size: usize, stride: usize, groups: usize) -> MsdLayer {
    MsdLayer { channels, kernel_size, stride, groups }
}

impl Default for DiscriminatorConfig {
    /// The V2 discriminator layout.
    fn default() -> Self {
        Self {
            leaky_slope: 0.1,
            mpd: MpdConfig {
                periods: vec![2, 3, 5, 7, 11],
                channels: vec![32, 128, 512, 1024, 1024],
                kernel_size: 5,
                stride: 3,
                post_kernel_size: 3,
                pad_mode: PadMode::Reflect,
            },
            msd: MsdConfig {
                scales: 3,
                layers: vec![
                    layer(128, 15, 1, 1),
                    layer(128, 41, 2, 4),
                    layer(256, 41, 2, 16),
                    layer(512, 41, 4, 16),
                    layer(1024, 41, 4, 16),
                    layer(1024, 41, 1, 16),
                    layer(1024, 5, 1, 1),
                ],
                post_kernel_size: 3,
                pool_kernel: 4,
                pool_stride: 2,
                pool_padding: 2,
                spectral_norm_first: true,
            },
        }
    }
}

impl DiscriminatorConfig {
    /// Same structure (5 periods, 3 scales) with very few channels.
    pub fn tiny() -> Self {
        let mut c = Self::default();
        c.mpd.channels = vec![4, 8, 8];
        c.msd.layers = vec![layer(4, 15, 1, 1), layer(8, 41, 4, 4), layer(8, 5, 1, 1)];
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("discriminator: {m}")));
        if self.mpd.periods.is_empty() || self.mpd.periods.contains(&0) {
            return bad("periods must be positive");
        }
        if self.mpd.channels.is_empty() || self.mpd.kernel_size % 2 == 0 || self.mpd.stride == 0 {
            return bad("invalid period branch layout");
        }
        if self.msd.scales == 0 || self.msd.layers.is_empty() {
            return bad("at least one scale and one layer are required");
        }
        let mut c_in = 1;
        for l in &self.msd.layers {
            if l.groups == 0 || c_in % l.groups != 0 || l.channels % l.groups != 0 || l.kernel_size % 2 == 0 || l.stride == 0 {
                return bad(&format!("invalid scale layer {l:?} after {c_in} channels"));
            }
            c_in = l.channels;
        }
        if self.mpd.post_kernel_size % 2 == 0 || self.msd.post_kernel_size % 2 == 0 {
            return bad("post kernels must be odd");
        }
        if self.msd.pool_kernel == 0 || self.msd.pool_stride == 0 {
            return bad("invalid pooling");
        }
        Ok(())
    }

    pub fn sub_discriminator_count(&self) -> usize {
        self.mpd.periods.len() + self.msd.scales
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hash(&self) -> String {
        crate::records::config_hash(self)
    }
}

/// Score maps and intermediate features of every sub-discriminator, in
/// the order periods then scales.
#[derive(Clone, Debug)]
pub struct DiscriminatorOutput {
    pub logits: Vec<Var>,
    /// `features[i]` runs from shallow to deep layers of sub-discriminator `i`.
    pub features: Vec<Vec<Var>>,
}

impl DiscriminatorOutput {
    fn extend(&mut self, other: DiscriminatorOutput) {
        self.logits.extend(other.logits);
        self.features.extend(other.features);
    }
}

#[derive(Clone, Debug)]
struct SubDiscriminator {
    convs: Vec<Conv1d>,
    post: Conv1d,
}

impl SubDiscriminator {
    fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mut x: Var, slope: T) -> (Var, Vec<Var>) {
        let mut feats = Vec::with_capacity(self.convs.len() + 1);
        for c in &self.convs {
            x = c.forward(g, store, x);
            x = g.leaky_relu(x, slope);
            feats.push(x);
        }
        x = self.post.forward(g, store, x);
        feats.push(x);
        (x, feats)
    }

    fn refresh<T: Real>(&self, store: &mut ParamStore<T>) {
        for c in self.convs.iter().chain([&self.post]) {
            c.refresh_spectral_norm(store);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator<T: Real> {
    config: DiscriminatorConfig,
    store: ParamStore<T>,
    periods: Vec<(usize, SubDiscriminator)>,
    scales: Vec<SubDiscriminator>,
}

impl<T: Real> Discriminator<T> {
    pub fn build(config: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let m = &config.mpd;
        let periods = m
            .periods
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let name = format!("mpd.discriminators.{i}");
                let mut c_in = 1;
                let last = m.channels.len() - 1;
                let convs = m
                    .channels
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let stride = if j == last { 1 } else { m.stride };
                        let opts = ConvOptions::same(m.kernel_size, 1).stride(stride).norm(Norm::Weight).init(Init::FanIn);
                        let conv = Conv1d::new(&mut store, &mut rng, &format!("{name}.convs.{j}"), c_in, c, opts);
                        c_in = c;
                        conv
                    })
                    .collect();
                let opts = ConvOptions::same(m.post_kernel_size, 1).norm(Norm::Weight).init(Init::FanIn);
                let post = Conv1d::new(&mut store, &mut rng, &format!("{name}.conv_post"), c_in, 1, opts);
                (p, SubDiscriminator { convs, post })
            })
            .collect();
        let s = &config.msd;
        let scales = (0..s.scales)
            .map(|i| {
                let name = format!("msd.discriminators.{i}");
                let norm = if i == 0 && s.spectral_norm_first { Norm::Spectral } else { Norm::Weight };
                let mut c_in = 1;
                let convs = s
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let opts = ConvOptions::same(l.kernel_size, 1)
                            .stride(l.stride)
                            .groups(l.groups)
                            .norm(norm)
                            .init(Init::FanIn);
                        let conv = Conv1d::new(&mut store, &mut rng, &format!("{name}.convs.{j}"), c_in, l.channels, opts);
                        c_in = l.channels;
                        conv
                    })
                    .collect();
                let opts = ConvOptions::same(s.post_kernel_size, 1).norm(norm).init(Init::FanIn);
                let post = Conv1d::new(&mut store, &mut rng, &format!("{name}.conv_post"), c_in, 1, opts);
                SubDiscriminator { convs, post }
            })
            .collect();
        Ok(Self { config: config.clone(), store, periods, scales })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
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

    /// One power-iteration step for every spectrally normalised layer.
    pub fn refresh_spectral_norm(&mut self) {
        for sub in self.periods.iter().map(|(_, s)| s).chain(&self.scales) {
            sub.refresh(&mut self.store);
        }
    }

    fn check_input(&self, g: &Graph<T>, w: Var) -> Result<(usize, usize)> {
        let s = g.shape(w);
        if s.len() != 3 || s[1] != 1 {
            return Err(Error::invalid(format!("discriminator input must be [batch, 1, samples], got {s:?}")));
        }
        if s[2] == 0 {
            return Err(Error::invalid("discriminator input is empty"));
        }
        Ok((s[0], s[2]))
    }

    /// Multi-period branch: pad to a multiple of each period, fold the
    /// phases into the batch, and run strided convolutions along time.
    pub fn mpd_forward(&self, g: &mut Graph<T>, w: Var) -> Result<DiscriminatorOutput> {
        let (_, len) = self.check_input(g, w)?;
        let slope = T::from_f64_lossy(self.config.leaky_slope);
        let max_p = self.config.mpd.periods.iter().copied().max().unwrap_or(1);
        if len < max_p {
            return Err(Error::invalid(format!("waveform of {len} samples is shorter than period {max_p}")));
        }
        let mut out = DiscriminatorOutput { logits: vec![], features: vec![] };
        for (p, sub) in &self.periods {
            let padded = len.div_ceil(*p) * p;
            let x = if padded > len { g.pad(w, 0, padded - len, self.config.mpd.pad_mode) } else { w };
            let x = g.fold_period(x, *p);
            let (logit, feats) = sub.forward(g, &self.store, x, slope);
            out.logits.push(logit);
            out.features.push(feats);
        }
        Ok(out)
    }

    /// Multi-scale branch on the raw signal and successively average-pooled copies.
    pub fn msd_forward(&self, g: &mut Graph<T>, w: Var) -> Result<DiscriminatorOutput> {
        self.check_input(g, w)?;
        let slope = T::from_f64_lossy(self.config.leaky_slope);
        let s = &self.config.msd;
        let mut out = DiscriminatorOutput { logits: vec![], features: vec![] };
        let mut x = w;
        for (i, sub) in self.scales.iter().enumerate() {
            if i > 0 {
                x = g.avg_pool1d(x, s.pool_kernel, s.pool_stride, s.pool_padding);
            }
            let (logit, feats) = sub.forward(g, &self.store, x, slope);
            out.logits.push(logit);
            out.features.push(feats);
        }
        Ok(out)
    }

    /// Both branches: periods first, then scales.
    pub fn discriminate(&self, g: &mut Graph<T>, w: Var) -> Result<DiscriminatorOutput> {
        let mut out = self.mpd_forward(g, w)?;
        out.extend(self.msd_forward(g, w)?);
        Ok(out)
    }
}
