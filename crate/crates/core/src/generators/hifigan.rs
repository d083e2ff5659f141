use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::{same_conv, Layer, NodeId, Topology};
use super::{check_hop, lrelu};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvOptions, ConvTranspose1d, ConvTransposeSpec, Graph, Init, Norm, ParamStore, Real, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HifiGanConfig {
    pub n_mels: usize,
    pub upsample_initial_channel: usize,
    pub upsample_rates: Vec<usize>,
    pub upsample_kernel_sizes: Vec<usize>,
    pub resblock_kernel_sizes: Vec<usize>,
    pub resblock_dilation_sizes: Vec<Vec<usize>>,
    pub init: Init,
}

impl Default for HifiGanConfig {
    /// The V2 configuration.
    fn default() -> Self {
        Self {
            n_mels: 80,
            upsample_initial_channel: 128,
            upsample_rates: vec![8, 8, 2, 2],
            upsample_kernel_sizes: vec![16, 16, 4, 4],
            resblock_kernel_sizes: vec![3, 7, 11],
            resblock_dilation_sizes: vec![vec![1, 3, 5]; 3],
            init: Init::Normal(0.01),
        }
    }
}

impl HifiGanConfig {
    pub fn tiny(n_mels: usize) -> Self {
        Self {
            n_mels,
            upsample_initial_channel: 16,
            resblock_kernel_sizes: vec![3, 5],
            resblock_dilation_sizes: vec![vec![1, 2]; 2],
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_hop(&self.upsample_rates)?;
        let n = self.upsample_rates.len();
        if self.upsample_kernel_sizes.len() != n {
            return Err(Error::Config("upsample_kernel_sizes must match upsample_rates".into()));
        }
        for (&u, &k) in self.upsample_rates.iter().zip(&self.upsample_kernel_sizes) {
            if k < u || (k - u) % 2 != 0 {
                return Err(Error::Config(format!("upsample kernel {k} incompatible with rate {u}")));
            }
        }
        if self.upsample_initial_channel >> n == 0 {
            return Err(Error::Config("upsample_initial_channel too small for the number of stages".into()));
        }
        if self.resblock_kernel_sizes.is_empty() || self.resblock_kernel_sizes.len() != self.resblock_dilation_sizes.len() {
            return Err(Error::Config("resblock kernel and dilation lists must be non-empty and equal length".into()));
        }
        if self.resblock_kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config("resblock kernels must be odd".into()));
        }
        Ok(())
    }

    pub(crate) fn topology(&self) -> Topology {
        let mut t = Topology::new();
        let mut x = t.layer(t.input(), same_conv(7, 1));
        for (&u, &k) in self.upsample_rates.iter().zip(&self.upsample_kernel_sizes) {
            x = t.layer(x, Layer::ConvTranspose { kernel: k, stride: u, padding: (k - u) / 2 });
            let branches: Vec<NodeId> = self
                .resblock_kernel_sizes
                .iter()
                .zip(&self.resblock_dilation_sizes)
                .map(|(&k, ds)| {
                    let mut y = x;
                    for &d in ds {
                        let c = t.chain(y, &[same_conv(k, d), same_conv(k, 1)]);
                        y = t.sum(&[y, c]);
                    }
                    y
                })
                .collect();
            x = t.sum(&branches);
        }
        t.layer(x, same_conv(7, 1));
        t
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HifiGan {
    pre: Conv1d,
    ups: Vec<ConvTranspose1d>,
    /// `[stage][kernel]` → list of (dilated conv, plain conv).
    resblocks: Vec<Vec<Vec<(Conv1d, Conv1d)>>>,
    post: Conv1d,
}

impl HifiGan {
    pub(crate) fn build<T: Real, R: Rng>(cfg: &HifiGanConfig, store: &mut ParamStore<T>, rng: &mut R) -> Self {
        let init = cfg.init;
        let conv = |k: usize, d: usize| ConvOptions::same(k, d).norm(Norm::Weight).init(init);
        let c0 = cfg.upsample_initial_channel;
        let pre = Conv1d::new(store, rng, "conv_pre", cfg.n_mels, c0, conv(7, 1));
        let mut ups = Vec::new();
        let mut resblocks = Vec::new();
        let nk = cfg.resblock_kernel_sizes.len();
        for (i, (&u, &k)) in cfg.upsample_rates.iter().zip(&cfg.upsample_kernel_sizes).enumerate() {
            let (c_in, c_out) = (c0 >> i, c0 >> (i + 1));
            let spec = ConvTransposeSpec { stride: u, padding: (k - u) / 2, output_padding: 0 };
            ups.push(ConvTranspose1d::new(store, rng, &format!("ups.{i}"), c_in, c_out, k, spec, Norm::Weight, init));
            let stage = cfg
                .resblock_kernel_sizes
                .iter()
                .zip(&cfg.resblock_dilation_sizes)
                .enumerate()
                .map(|(j, (&k, ds))| {
                    let name = format!("resblocks.{}", i * nk + j);
                    let convs1: Vec<Conv1d> = ds
                        .iter()
                        .enumerate()
                        .map(|(m, &d)| Conv1d::new(store, rng, &format!("{name}.convs1.{m}"), c_out, c_out, conv(k, d)))
                        .collect();
                    let convs2: Vec<Conv1d> = (0..ds.len())
                        .map(|m| Conv1d::new(store, rng, &format!("{name}.convs2.{m}"), c_out, c_out, conv(k, 1)))
                        .collect();
                    convs1.into_iter().zip(convs2).collect()
                })
                .collect();
            resblocks.push(stage);
        }
        let c_last = c0 >> cfg.upsample_rates.len();
        let post = Conv1d::new(store, rng, "conv_post", c_last, 1, conv(7, 1));
        Self { pre, ups, resblocks, post }
    }

    pub(crate) fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var) -> Var {
        let mut x = self.pre.forward(g, store, mel);
        for (up, stage) in self.ups.iter().zip(&self.resblocks) {
            x = lrelu(g, x, 0.1);
            x = up.forward(g, store, x);
            let outs: Vec<Var> = stage
                .iter()
                .map(|block| {
                    let mut y = x;
                    for (c1, c2) in block {
                        let mut t = lrelu(g, y, 0.1);
                        t = c1.forward(g, store, t);
                        t = lrelu(g, t, 0.1);
                        t = c2.forward(g, store, t);
                        y = g.add(t, y);
                    }
                    y
                })
                .collect();
            let s = g.sum_all(&outs);
            x = g.scale(s, T::from_f64_lossy(1.0 / stage.len() as f64));
        }
        x = lrelu(g, x, 0.01);
        x = self.post.forward(g, store, x);
        g.tanh(x)
    }
}
