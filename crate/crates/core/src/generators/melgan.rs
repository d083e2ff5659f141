//! MelGAN and its two descendants that keep the transposed-convolution
//! backbone: UMGAN (gated residual units) and VocGAN (longer upsampling
//! sequence with mel skip connections).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::{Layer, Topology};
use super::{check_hop, lrelu};
use crate::error::{Error, Result};
use crate::nn::{
    Conv1d, ConvOptions, ConvTranspose1d, ConvTransposeSpec, Graph, Init, Norm, PadMode, ParamStore, Real, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelGanConfig {
    pub n_mels: usize,
    pub ngf: usize,
    pub n_residual_layers: usize,
    pub ratios: Vec<usize>,
    pub init: Init,
}

impl Default for MelGanConfig {
    fn default() -> Self {
        Self { n_mels: 80, ngf: 32, n_residual_layers: 3, ratios: vec![8, 8, 2, 2], init: Init::FanIn }
    }
}

impl MelGanConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self { n_mels, ngf: 2, n_residual_layers: 2, ..Self::default() }
    }

    fn channels(&self) -> (usize, Vec<usize>) {
        let c0 = self.ngf << self.ratios.len();
        (c0, (1..=self.ratios.len()).map(|i| c0 >> i).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UmganConfig {
    pub n_mels: usize,
    pub initial_channels: usize,
    pub ratios: Vec<usize>,
    pub n_gau_layers: usize,
    pub init: Init,
}

impl Default for UmganConfig {
    fn default() -> Self {
        Self { n_mels: 80, initial_channels: 2048, ratios: vec![8, 8, 2, 2], n_gau_layers: 4, init: Init::FanIn }
    }
}

impl UmganConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self { n_mels, initial_channels: 32, n_gau_layers: 2, ..Self::default() }
    }

    fn channels(&self) -> Vec<usize> {
        (1..=self.ratios.len()).map(|i| self.initial_channels >> i).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocGanConfig {
    pub n_mels: usize,
    pub initial_channels: usize,
    /// Output channels of each upsampling stage.
    pub stage_channels: Vec<usize>,
    pub ratios: Vec<usize>,
    pub n_residual_layers: usize,
    /// The last `mel_skip_stages` stages receive the mel spectrogram,
    /// upsampled by a transposed convolution, added to their input.
    pub mel_skip_stages: usize,
    /// The input is mapped to `(mel + mel_offset) · mel_scale` before any layer.
    pub mel_offset: f64,
    pub mel_scale: f64,
    pub init: Init,
}

impl Default for VocGanConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            initial_channels: 512,
            stage_channels: vec![256, 128, 64, 32, 16, 8],
            ratios: vec![4, 4, 2, 2, 2, 2],
            n_residual_layers: 4,
            mel_skip_stages: 4,
            mel_offset: 5.0,
            mel_scale: 0.2,
            init: Init::FanIn,
        }
    }
}

impl VocGanConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self { n_mels, initial_channels: 16, stage_channels: vec![8, 8, 4, 4, 2, 2], n_residual_layers: 2, ..Self::default() }
    }

    /// Cumulative upsampling factor after each stage.
    fn cumulative(&self) -> Vec<usize> {
        self.ratios.iter().scan(1, |acc, &r| {
            *acc *= r;
            Some(*acc)
        }).collect()
    }
}

/// Everything the shared builder needs.
struct Plan {
    n_mels: usize,
    c0: usize,
    channels: Vec<usize>,
    ratios: Vec<usize>,
    units: usize,
    gated: bool,
    /// `(stage, cumulative factor)` pairs receiving mel skips.
    mel_skips: Vec<(usize, usize)>,
    input_affine: Option<(f64, f64)>,
    init: Init,
}

impl Plan {
    fn validate(&self) -> Result<()> {
        check_hop(&self.ratios)?;
        if self.c0 == 0 || self.channels.len() != self.ratios.len() || self.channels.contains(&0) {
            return Err(Error::Config("every stage needs at least one channel".into()));
        }
        if self.units == 0 {
            return Err(Error::Config("at least one residual layer per stage is required".into()));
        }
        if let Some((o, s)) = self.input_affine {
            if !(o.is_finite() && s.is_finite() && s != 0.0) {
                return Err(Error::Config("mel_offset must be finite and mel_scale finite and nonzero".into()));
            }
        }
        if let Some((_, cum)) = self.mel_skips.iter().find(|(_, c)| c % 2 != 0) {
            return Err(Error::Config(format!("mel skip factor {cum} must be even")));
        }
        Ok(())
    }

    fn topology(&self) -> Topology {
        let mut t = Topology::new();
        let mel = t.input();
        let mut x = t.layer(mel, Layer::Conv { kernel: 7, dilation: 1, pad_left: 3 });
        for (i, &r) in self.ratios.iter().enumerate() {
            x = t.chain(x, &[Layer::Pointwise, Layer::ConvTranspose { kernel: 2 * r, stride: r, padding: r / 2 + r % 2 }]);
            if let Some(&(_, cum)) = self.mel_skips.iter().find(|(s, _)| *s == i) {
                let skip = t.layer(mel, Layer::ConvTranspose { kernel: 2 * cum, stride: cum, padding: cum / 2 });
                x = t.sum(&[x, skip]);
            }
            for j in 0..self.units {
                let d = 3usize.pow(j as u32);
                let branch = t.chain(x, &[Layer::Pointwise, Layer::Conv { kernel: 3, dilation: d, pad_left: d }, Layer::Pointwise]);
                let short = t.layer(x, Layer::Pointwise);
                x = t.sum(&[short, branch]);
            }
        }
        t.layer(x, Layer::Conv { kernel: 7, dilation: 1, pad_left: 3 });
        t
    }
}

fn melgan_plan(c: &MelGanConfig) -> Plan {
    let (c0, channels) = c.channels();
    Plan {
        n_mels: c.n_mels,
        c0,
        channels,
        ratios: c.ratios.clone(),
        units: c.n_residual_layers,
        gated: false,
        mel_skips: vec![],
        input_affine: None,
        init: c.init,
    }
}

fn umgan_plan(c: &UmganConfig) -> Plan {
    Plan {
        n_mels: c.n_mels,
        c0: c.initial_channels,
        channels: c.channels(),
        ratios: c.ratios.clone(),
        units: c.n_gau_layers,
        gated: true,
        mel_skips: vec![],
        input_affine: None,
        init: c.init,
    }
}

fn vocgan_plan(c: &VocGanConfig) -> Plan {
    let cum = c.cumulative();
    let from = c.ratios.len().saturating_sub(c.mel_skip_stages);
    Plan {
        n_mels: c.n_mels,
        c0: c.initial_channels,
        channels: c.stage_channels.clone(),
        ratios: c.ratios.clone(),
        units: c.n_residual_layers,
        gated: false,
        mel_skips: (from..c.ratios.len()).map(|i| (i, cum[i])).collect(),
        input_affine: Some((c.mel_offset, c.mel_scale)),
        init: c.init,
    }
}

impl MelGanConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        melgan_plan(self).validate()
    }

    pub(crate) fn topology(&self) -> Topology {
        melgan_plan(self).topology()
    }
}

impl UmganConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        umgan_plan(self).validate()
    }

    pub(crate) fn topology(&self) -> Topology {
        umgan_plan(self).topology()
    }
}

impl VocGanConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.mel_skip_stages > self.ratios.len() {
            return Err(Error::Config("mel_skip_stages exceeds the number of stages".into()));
        }
        vocgan_plan(self).validate()
    }

    pub(crate) fn topology(&self) -> Topology {
        vocgan_plan(self).topology()
    }
}

#[derive(Clone, Debug)]
enum Unit {
    /// lrelu → dilated conv → lrelu → 1×1, plus a 1×1 shortcut.
    Dilated { conv: Conv1d, pointwise: Conv1d, shortcut: Conv1d },
    /// dilated conv to 2·dim → tanh ⊙ sigmoid → 1×1, plus a 1×1 shortcut.
    Gated { conv: Conv1d, out: Conv1d, shortcut: Conv1d, dim: usize },
}

#[derive(Clone, Debug)]
struct Stage {
    up: ConvTranspose1d,
    mel_skip: Option<ConvTranspose1d>,
    units: Vec<Unit>,
}

#[derive(Clone, Debug)]
pub(crate) struct MelGanFamily {
    input_affine: Option<(f64, f64)>,
    pre: Conv1d,
    stages: Vec<Stage>,
    post: Conv1d,
}

impl MelGanFamily {
    pub(crate) fn melgan<T: Real, R: Rng>(c: &MelGanConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        Self::build(&melgan_plan(c), store, rng)
    }

    pub(crate) fn umgan<T: Real, R: Rng>(c: &UmganConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        Self::build(&umgan_plan(c), store, rng)
    }

    pub(crate) fn vocgan<T: Real, R: Rng>(c: &VocGanConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        Self::build(&vocgan_plan(c), store, rng)
    }

    fn build<T: Real, R: Rng>(p: &Plan, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let wn = |k: usize, d: usize| ConvOptions::same(k, d).norm(Norm::Weight).init(p.init);
        let reflect = |k: usize, d: usize| wn(k, d).pad_mode(PadMode::Reflect);
        let pre = Conv1d::new(store, rng, "conv_pre", p.n_mels, p.c0, reflect(7, 1));
        let mut stages = Vec::new();
        let mut c_in = p.c0;
        for (i, (&r, &ch)) in p.ratios.iter().zip(&p.channels).enumerate() {
            let name = format!("stages.{i}");
            let up = ConvTranspose1d::upsampler(store, rng, &format!("{name}.up"), c_in, ch, r, p.init);
            let mel_skip = p.mel_skips.iter().find(|(s, _)| *s == i).map(|&(_, cum)| {
                let spec = ConvTransposeSpec { stride: cum, padding: cum / 2, output_padding: 0 };
                ConvTranspose1d::new(store, rng, &format!("{name}.mel_skip"), p.n_mels, ch, 2 * cum, spec, Norm::Weight, p.init)
            });
            let units = (0..p.units)
                .map(|j| {
                    let d = 3usize.pow(j as u32);
                    let un = format!("{name}.res.{j}");
                    let shortcut = Conv1d::new(store, rng, &format!("{un}.shortcut"), ch, ch, wn(1, 1));
                    if p.gated {
                        let conv = Conv1d::new(store, rng, &format!("{un}.conv"), ch, 2 * ch, reflect(3, d));
                        let out = Conv1d::new(store, rng, &format!("{un}.out"), ch, ch, wn(1, 1));
                        Unit::Gated { conv, out, shortcut, dim: ch }
                    } else {
                        let conv = Conv1d::new(store, rng, &format!("{un}.conv"), ch, ch, reflect(3, d));
                        let pointwise = Conv1d::new(store, rng, &format!("{un}.pointwise"), ch, ch, wn(1, 1));
                        Unit::Dilated { conv, pointwise, shortcut }
                    }
                })
                .collect();
            stages.push(Stage { up, mel_skip, units });
            c_in = ch;
        }
        let post = Conv1d::new(store, rng, "conv_post", c_in, 1, reflect(7, 1));
        Self { input_affine: p.input_affine, pre, stages, post }
    }

    /// Keeps the input scaling but drops its offset (for impulse probing).
    pub(crate) fn clear_input_offset(&mut self) {
        if let Some((o, _)) = self.input_affine.as_mut() {
            *o = 0.0;
        }
    }

    pub(crate) fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var) -> Var {
        let mel = match self.input_affine {
            Some((o, s)) => {
                let shifted = g.add_scalar(mel, T::from_f64_lossy(o));
                g.scale(shifted, T::from_f64_lossy(s))
            }
            None => mel,
        };
        let mut x = self.pre.forward(g, store, mel);
        for stage in &self.stages {
            x = lrelu(g, x, 0.2);
            x = stage.up.forward(g, store, x);
            if let Some(skip) = &stage.mel_skip {
                let s = skip.forward(g, store, mel);
                x = g.add(x, s);
            }
            for unit in &stage.units {
                x = match unit {
                    Unit::Dilated { conv, pointwise, shortcut } => {
                        let mut y = lrelu(g, x, 0.2);
                        y = conv.forward(g, store, y);
                        y = lrelu(g, y, 0.2);
                        y = pointwise.forward(g, store, y);
                        let s = shortcut.forward(g, store, x);
                        g.add(s, y)
                    }
                    Unit::Gated { conv, out, shortcut, dim } => {
                        let h = conv.forward(g, store, x);
                        let a = g.narrow(h, 0, *dim);
                        let b = g.narrow(h, *dim, *dim);
                        let z = g.gated_tanh(a, b);
                        let y = out.forward(g, store, z);
                        let s = shortcut.forward(g, store, x);
                        g.add(s, y)
                    }
                };
            }
        }
        x = lrelu(g, x, 0.2);
        x = self.post.forward(g, store, x);
        g.tanh(x)
    }
}
