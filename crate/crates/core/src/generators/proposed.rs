//! Axial residual generator: a stack of blocks made of a large-kernel
//! group-wise convolution, a 1×1 channel mixer and a dilated kernel-3
//! convolution, driven by Gaussian noise with the mel spectrogram upsampled
//! and added to every block input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::{same_conv, Layer, NodeId, Topology};
use super::{check_hop, lrelu};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvOptions, Graph, Init, ParamStore, Real, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposedConfig {
    pub n_mels: usize,
    /// Channels of the noise latent (mel frame rate).
    pub noise_dim: usize,
    pub channels: usize,
    pub groups: usize,
    pub blocks: usize,
    pub large_kernel: usize,
    /// Block `i` uses dilation `2^(i mod dilation_cycle)` in its kernel-3 conv.
    pub dilation_cycle: usize,
    pub mel_upsample: Vec<usize>,
    pub init: Init,
}

impl Default for ProposedConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            noise_dim: 16,
            channels: 88,
            groups: 44,
            blocks: 12,
            large_kernel: 357,
            dilation_cycle: 11,
            mel_upsample: vec![8, 8, 2, 2],
            init: Init::Normal(0.01),
        }
    }
}

impl ProposedConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self { n_mels, noise_dim: 2, channels: 4, groups: 2, blocks: 4, large_kernel: 31, dilation_cycle: 3, ..Self::default() }
    }

    pub fn dilation(&self, block: usize) -> usize {
        1 << (block % self.dilation_cycle)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_hop(&self.mel_upsample)?;
        if self.noise_dim == 0 || self.channels == 0 || self.blocks == 0 || self.dilation_cycle == 0 {
            return Err(Error::Config("noise_dim, channels, blocks and dilation_cycle must be positive".into()));
        }
        if self.groups == 0 || self.channels % self.groups != 0 {
            return Err(Error::Config(format!("{} channels not divisible into {} groups", self.channels, self.groups)));
        }
        if self.large_kernel % 2 == 0 {
            return Err(Error::Config("large_kernel must be odd".into()));
        }
        if self.dilation_cycle > 30 {
            return Err(Error::Config("dilation_cycle too large".into()));
        }
        Ok(())
    }

    fn block_layers(&self, t: &mut Topology, x: NodeId, block: usize) -> NodeId {
        let h = t.chain(x, &[same_conv(self.large_kernel, 1), Layer::Pointwise, Layer::Pointwise]);
        let r = t.sum(&[h, x]);
        t.chain(r, &[same_conv(3, self.dilation(block)), Layer::Pointwise])
    }

    /// Full mel-frame to output-sample topology.
    pub(crate) fn topology(&self) -> Topology {
        let mut t = Topology::new();
        let mut c = t.input();
        for &r in &self.mel_upsample {
            c = t.chain(c, &[Layer::Upsample { factor: r }, same_conv(3, 1), Layer::Pointwise]);
        }
        let mut x = t.constant();
        let mut skips = Vec::new();
        for b in 0..self.blocks {
            let xin = t.sum(&[x, c]);
            x = self.block_layers(&mut t, xin, b);
            skips.push(x);
        }
        let s = t.sum(&skips);
        t.chain(s, &[Layer::Pointwise, Layer::Pointwise]);
        t
    }

    /// Sample-level topology of the residual stack from the first block's
    /// input to the output of block `upto` (1-based).
    pub(crate) fn block_topology(&self, upto: usize) -> Topology {
        let mut t = Topology::new();
        let mut x = t.input();
        for b in 0..upto {
            x = self.block_layers(&mut t, x, b);
        }
        t
    }
}

#[derive(Clone, Debug)]
struct Block {
    group_conv: Conv1d,
    mixer: Conv1d,
    dilated: Conv1d,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ProposedTrace {
    /// Upsampled mel conditioning `[B, C, 256·T]`.
    pub conditioning: Var,
    /// Noise projection entering the first block.
    pub x0: Var,
    /// Input of every block (after the conditioning add).
    pub block_inputs: Vec<Var>,
    pub block_outputs: Vec<Var>,
    pub output: Var,
}

/// Overrides for probing the internal structure.
#[derive(Clone, Debug, Default)]
pub struct ProposedProbe {
    /// Replaces the noise projection entering the first block.
    pub x0: Option<Var>,
    /// Replaces the upsampled mel conditioning.
    pub conditioning: Option<Var>,
    /// `false` entries drop that block's skip contribution.
    pub skip_mask: Option<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct Proposed {
    cfg: ProposedConfig,
    mel_convs: Vec<Conv1d>,
    noise_proj: Conv1d,
    blocks: Vec<Block>,
    post1: Conv1d,
    post2: Conv1d,
}

impl Proposed {
    pub(crate) fn build<T: Real, R: Rng>(c: &ProposedConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let init = c.init;
        let ch = c.channels;
        let mel_convs = (0..c.mel_upsample.len())
            .map(|i| {
                let c_in = if i == 0 { c.n_mels } else { ch };
                Conv1d::new(store, rng, &format!("mel_upsample.{i}"), c_in, ch, ConvOptions::same(3, 1).init(init))
            })
            .collect();
        let noise_proj = Conv1d::new(store, rng, "noise_proj", c.noise_dim, ch, ConvOptions::pointwise().init(init));
        let blocks = (0..c.blocks)
            .map(|b| Block {
                group_conv: Conv1d::new(
                    store,
                    rng,
                    &format!("blocks.{b}.group_conv"),
                    ch,
                    ch,
                    ConvOptions::same(c.large_kernel, 1).groups(c.groups).init(init),
                ),
                mixer: Conv1d::new(store, rng, &format!("blocks.{b}.mixer"), ch, ch, ConvOptions::pointwise().init(init)),
                dilated: Conv1d::new(
                    store,
                    rng,
                    &format!("blocks.{b}.dilated"),
                    ch,
                    ch,
                    ConvOptions::same(3, c.dilation(b)).init(init),
                ),
            })
            .collect();
        let post1 = Conv1d::new(store, rng, "postnet.0", ch, ch, ConvOptions::pointwise().init(init));
        let post2 = Conv1d::new(store, rng, "postnet.1", ch, 1, ConvOptions::pointwise().init(init));
        Self { cfg: c.clone(), mel_convs, noise_proj, blocks, post1, post2 }
    }

    pub fn config(&self) -> &ProposedConfig {
        &self.cfg
    }

    pub fn conditioning<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var) -> Var {
        let mut c = mel;
        let last = self.mel_convs.len() - 1;
        for (i, (conv, &r)) in self.mel_convs.iter().zip(&self.cfg.mel_upsample).enumerate() {
            c = g.upsample_nearest(c, r);
            c = conv.forward(g, store, c);
            if i < last {
                c = lrelu(g, c, 0.1);
            }
        }
        c
    }

    pub fn trace<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        mel: Var,
        noise: Var,
        probe: &ProposedProbe,
    ) -> ProposedTrace {
        let conditioning = match probe.conditioning {
            Some(c) => c,
            None => self.conditioning(g, store, mel),
        };
        let x0 = match probe.x0 {
            Some(x) => x,
            None => {
                let n = self.noise_proj.forward(g, store, noise);
                g.upsample_nearest(n, self.cfg.mel_upsample.iter().product())
            }
        };
        let mut x = x0;
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut block_outputs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let xin = g.add(x, conditioning);
            block_inputs.push(xin);
            let mut h = block.group_conv.forward(g, store, xin);
            h = lrelu(g, h, 0.1);
            h = block.mixer.forward(g, store, h);
            h = lrelu(g, h, 0.1);
            h = g.add(h, xin);
            h = block.dilated.forward(g, store, h);
            x = lrelu(g, h, 0.1);
            block_outputs.push(x);
        }
        let kept: Vec<Var> = block_outputs
            .iter()
            .enumerate()
            .filter(|(i, _)| probe.skip_mask.as_ref().is_none_or(|m| m.get(*i).copied().unwrap_or(true)))
            .map(|(_, &v)| v)
            .collect();
        let s = if kept.is_empty() { g.scale(block_outputs[0], T::zero()) } else { g.sum_all(&kept) };
        let mut y = self.post1.forward(g, store, s);
        y = lrelu(g, y, 0.1);
        y = self.post2.forward(g, store, y);
        let output = g.tanh(y);
        ProposedTrace { conditioning, x0, block_inputs, block_outputs, output }
    }

    pub(crate) fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var, noise: Var) -> Var {
        self.trace(g, store, mel, noise, &ProposedProbe::default()).output
    }
}
