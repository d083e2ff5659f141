use rand::Rng;
use serde::{Deserialize, Serialize};

use super::check_hop;
use super::topology::{Layer, Topology};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvOptions, Graph, Init, Norm, PadMode, ParamStore, Real, Var};

/// Non-causal WaveNet driven by per-sample Gaussian noise and conditioned on
/// an upsampled mel spectrogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PwganConfig {
    pub n_mels: usize,
    pub noise_dim: usize,
    pub residual_channels: usize,
    pub gate_channels: usize,
    pub skip_channels: usize,
    pub layers: usize,
    pub stacks: usize,
    pub kernel_size: usize,
    pub upsample_scales: Vec<usize>,
    /// Mel frames of context on each side seen by the first conditioning conv.
    pub aux_context_window: usize,
    pub init: Init,
}

impl Default for PwganConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            noise_dim: 1,
            residual_channels: 64,
            gate_channels: 128,
            skip_channels: 64,
            layers: 30,
            stacks: 3,
            kernel_size: 3,
            upsample_scales: vec![4, 4, 4, 4],
            aux_context_window: 0,
            init: Init::FanIn,
        }
    }
}

impl PwganConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self {
            n_mels,
            residual_channels: 16,
            gate_channels: 32,
            skip_channels: 16,
            layers: 6,
            stacks: 2,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_hop(&self.upsample_scales)?;
        if self.noise_dim == 0 {
            return Err(Error::Config("pwgan needs noise_dim > 0".into()));
        }
        if self.layers == 0 || self.stacks == 0 || self.layers % self.stacks != 0 {
            return Err(Error::Config("layers must be a positive multiple of stacks".into()));
        }
        if self.gate_channels % 2 != 0 || self.gate_channels == 0 || self.residual_channels == 0 || self.skip_channels == 0 {
            return Err(Error::Config("channel counts must be positive and gate_channels even".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        Ok(())
    }

    fn dilation(&self, layer: usize) -> usize {
        1 << (layer % (self.layers / self.stacks))
    }

    pub(crate) fn topology(&self) -> Topology {
        let mut t = Topology::new();
        let a = self.aux_context_window;
        let mut c = t.layer(t.input(), Layer::Conv { kernel: 2 * a + 1, dilation: 1, pad_left: a });
        for &s in &self.upsample_scales {
            c = t.chain(c, &[Layer::Upsample { factor: s }, Layer::Conv { kernel: 2 * s + 1, dilation: 1, pad_left: s }]);
        }
        let mut x = t.constant();
        let mut skips = Vec::new();
        for l in 0..self.layers {
            let d = self.dilation(l);
            let conv = t.layer(x, Layer::Conv { kernel: self.kernel_size, dilation: d, pad_left: (self.kernel_size - 1) / 2 * d });
            let aux = t.layer(c, Layer::Pointwise);
            let gated = t.sum(&[conv, aux]);
            let z = t.layer(gated, Layer::Pointwise);
            skips.push(t.layer(z, Layer::Pointwise));
            let out = t.layer(z, Layer::Pointwise);
            x = t.sum(&[out, x]);
        }
        let s = t.sum(&skips);
        t.chain(s, &[Layer::Pointwise, Layer::Pointwise]);
        t
    }
}

#[derive(Clone, Debug)]
struct ResidualLayer {
    conv: Conv1d,
    aux: Conv1d,
    out: Option<Conv1d>,
    skip: Conv1d,
}

#[derive(Clone, Debug)]
pub(crate) struct Pwgan {
    cfg: PwganConfig,
    conv_in_aux: Conv1d,
    upsample: Vec<(usize, Conv1d)>,
    first: Conv1d,
    layers: Vec<ResidualLayer>,
    post1: Conv1d,
    post2: Conv1d,
}

impl Pwgan {
    pub(crate) fn build<T: Real, R: Rng>(c: &PwganConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let init = c.init;
        let pw = || ConvOptions::pointwise().norm(Norm::Weight).init(init);
        let a = c.aux_context_window;
        let conv_in_aux = Conv1d::new(
            store,
            rng,
            "upsample_net.conv_in",
            c.n_mels,
            c.n_mels,
            ConvOptions::same(2 * a + 1, 1).pad_mode(PadMode::Replicate).bias(false).norm(Norm::Weight).init(init),
        );
        let upsample = c
            .upsample_scales
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let opts = ConvOptions::same(2 * s + 1, 1).bias(false).norm(Norm::Weight).init(init);
                (s, Conv1d::new(store, rng, &format!("upsample_net.up_layers.{i}"), 1, 1, opts))
            })
            .collect();
        let first = Conv1d::new(store, rng, "first_conv", c.noise_dim, c.residual_channels, pw());
        let half = c.gate_channels / 2;
        let layers = (0..c.layers)
            .map(|l| {
                let name = format!("conv_layers.{l}");
                let opts = ConvOptions::same(c.kernel_size, c.dilation(l)).norm(Norm::Weight).init(init);
                ResidualLayer {
                    conv: Conv1d::new(store, rng, &format!("{name}.conv"), c.residual_channels, c.gate_channels, opts),
                    aux: Conv1d::new(store, rng, &format!("{name}.conv1x1_aux"), c.n_mels, c.gate_channels, pw().bias(false)),
                    // the last layer's residual output is never consumed
                    out: (l + 1 < c.layers)
                        .then(|| Conv1d::new(store, rng, &format!("{name}.conv1x1_out"), half, c.residual_channels, pw())),
                    skip: Conv1d::new(store, rng, &format!("{name}.conv1x1_skip"), half, c.skip_channels, pw()),
                }
            })
            .collect();
        let post1 = Conv1d::new(store, rng, "last_conv_layers.1", c.skip_channels, c.skip_channels, pw());
        let post2 = Conv1d::new(store, rng, "last_conv_layers.3", c.skip_channels, 1, pw());
        Self { cfg: c.clone(), conv_in_aux, upsample, first, layers, post1, post2 }
    }

    /// Mel `[B, M, T]` to per-sample conditioning `[B, M, 256·T]`.
    fn upsample_mel<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var) -> Var {
        let mut c = self.conv_in_aux.forward(g, store, mel);
        for (s, conv) in &self.upsample {
            c = g.upsample_nearest(c, *s);
            let (b, m, l) = (g.shape(c)[0], g.shape(c)[1], g.shape(c)[2]);
            let flat = g.reshape(c, vec![b * m, 1, l]);
            let y = conv.forward(g, store, flat);
            c = g.reshape(y, vec![b, m, l]);
        }
        c
    }

    pub(crate) fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var, noise: Var) -> Var {
        let c = self.upsample_mel(g, store, mel);
        let half = self.cfg.gate_channels / 2;
        let sqrt_half = T::from_f64_lossy(0.5f64.sqrt());
        let mut x = self.first.forward(g, store, noise);
        let mut skips = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.conv.forward(g, store, x);
            let ca = layer.aux.forward(g, store, c);
            let h = g.add(h, ca);
            let xa = g.narrow(h, 0, half);
            let xb = g.narrow(h, half, half);
            let z = g.gated_tanh(xa, xb);
            skips.push(layer.skip.forward(g, store, z));
            if let Some(out) = &layer.out {
                let o = out.forward(g, store, z);
                let r = g.add(o, x);
                x = g.scale(r, sqrt_half);
            }
        }
        let s = g.sum_all(&skips);
        let mut y = g.scale(s, T::from_f64_lossy((1.0 / skips.len() as f64).sqrt()));
        y = g.relu(y);
        y = self.post1.forward(g, store, y);
        y = g.relu(y);
        self.post2.forward(g, store, y)
    }
}
