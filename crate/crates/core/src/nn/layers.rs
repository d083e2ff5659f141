use rand::Rng;

use super::graph::{Graph, Var};
use super::kernels::{ConvSpec, ConvTransposeSpec, PadMode};
use super::params::{init_weight, normal_tensor, uniform_tensor, Init, ParamId, ParamStore};
use super::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    None,
    Weight,
    Spectral,
}

#[derive(Clone, Copy, Debug)]
enum WeightParam {
    Plain(ParamId),
    WeightNorm { v: ParamId, g: ParamId },
    Spectral { w: ParamId, u: ParamId, v: ParamId },
}

fn make_weight<T: Real, R: Rng>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    name: &str,
    shape: Vec<usize>,
    fan_in: usize,
    init: Init,
    norm: Norm,
) -> WeightParam {
    let w: Tensor<T> = init_weight(rng, shape.clone(), fan_in, init);
    match norm {
        Norm::None => WeightParam::Plain(store.add(format!("{name}.weight"), w, true)),
        Norm::Weight => {
            let rows = shape[0];
            let cols = w.numel() / rows;
            let gains = (0..rows)
                .map(|r| w.data()[r * cols..(r + 1) * cols].iter().map(|&a| a * a).sum::<T>().sqrt())
                .collect();
            let mut gshape = vec![1; shape.len()];
            gshape[0] = rows;
            let g = store.add(format!("{name}.weight_g"), Tensor::new(gshape, gains), true);
            let v = store.add(format!("{name}.weight_v"), w, true);
            WeightParam::WeightNorm { v, g }
        }
        Norm::Spectral => {
            let rows = shape[0];
            let cols = w.numel() / rows;
            let u0 = normalized(normal_tensor::<T, R>(rng, vec![rows], 1.0));
            let v0 = normalized(normal_tensor::<T, R>(rng, vec![cols], 1.0));
            let wid = store.add(format!("{name}.weight_orig"), w, true);
            let u = store.add(format!("{name}.weight_u"), u0, false);
            let v = store.add(format!("{name}.weight_v"), v0, false);
            let wp = WeightParam::Spectral { w: wid, u, v };
            for _ in 0..15 {
                power_iteration(store, wp);
            }
            wp
        }
    }
}

fn normalized<T: Real>(t: Tensor<T>) -> Tensor<T> {
    let n = t.data().iter().map(|&a| a * a).sum::<T>().sqrt().max(T::from_f64_lossy(1e-12));
    t.map(|a| a / n)
}

fn power_iteration<T: Real>(store: &mut ParamStore<T>, wp: WeightParam) {
    let WeightParam::Spectral { w, u, v } = wp else { return };
    let wt = store.tensor(w);
    let rows = wt.shape()[0];
    let cols = wt.numel() / rows;
    let ut = store.tensor(u).data().to_vec();
    let mut vn = vec![T::zero(); cols];
    for r in 0..rows {
        for c in 0..cols {
            vn[c] = vn[c] + wt.data()[r * cols + c] * ut[r];
        }
    }
    let vn = normalized(Tensor::new(vec![cols], vn));
    let un: Vec<T> = (0..rows)
        .map(|r| (0..cols).map(|c| wt.data()[r * cols + c] * vn.data()[c]).sum())
        .collect();
    let un = normalized(Tensor::new(vec![rows], un));
    *store.tensor_mut(u) = un;
    *store.tensor_mut(v) = vn;
}

fn resolve_weight<T: Real>(g: &mut Graph<T>, store: &ParamStore<T>, wp: WeightParam) -> Var {
    match wp {
        WeightParam::Plain(id) => g.param(store, id),
        WeightParam::WeightNorm { v, g: gain } => {
            let v = g.param(store, v);
            let gain = g.param(store, gain);
            g.weight_norm(v, gain)
        }
        WeightParam::Spectral { w, u, v } => {
            let wv = g.param(store, w);
            let ut = store.tensor(u).data();
            let vt = store.tensor(v).data();
            let shape = store.tensor(w).shape().to_vec();
            let outer = ut.iter().flat_map(|&a| vt.iter().map(move |&b| a * b)).collect();
            g.spectral_norm(wv, Tensor::new(shape, outer))
        }
    }
}

/// Options for [`Conv1d`].
#[derive(Clone, Copy, Debug)]
pub struct ConvOptions {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub pad_mode: PadMode,
    pub bias: bool,
    pub norm: Norm,
    pub init: Init,
}

impl ConvOptions {
    /// Length-preserving (for stride 1) zero-padded convolution.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let s = ConvSpec::same(kernel, dilation);
        Self {
            kernel,
            stride: 1,
            dilation,
            groups: 1,
            pad_left: s.pad_left,
            pad_right: s.pad_right,
            pad_mode: PadMode::Zero,
            bias: true,
            norm: Norm::None,
            init: Init::FanIn,
        }
    }

    pub fn pointwise() -> Self {
        Self::same(1, 1)
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn padding(mut self, left: usize, right: usize) -> Self {
        self.pad_left = left;
        self.pad_right = right;
        self
    }

    pub fn pad_mode(mut self, mode: PadMode) -> Self {
        self.pad_mode = mode;
        self
    }

    pub fn bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    weight: WeightParam,
    bias: Option<ParamId>,
    opts: ConvOptions,
}

impl Conv1d {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        opts: ConvOptions,
    ) -> Self {
        assert!(c_in % opts.groups == 0 && c_out % opts.groups == 0, "{name}: channels not divisible by groups");
        let fan_in = c_in / opts.groups * opts.kernel;
        let weight =
            make_weight(store, rng, name, vec![c_out, c_in / opts.groups, opts.kernel], fan_in, opts.init, opts.norm);
        let bias = opts.bias.then(|| {
            let b = uniform_tensor(rng, vec![c_out], 1.0 / (fan_in as f64).sqrt());
            store.add(format!("{name}.bias"), b, true)
        });
        Self { weight, bias, opts }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = resolve_weight(g, store, self.weight);
        let o = &self.opts;
        let (x, pl, pr) = if o.pad_mode != PadMode::Zero && (o.pad_left > 0 || o.pad_right > 0) {
            (g.pad(x, o.pad_left, o.pad_right, o.pad_mode), 0, 0)
        } else {
            (x, o.pad_left, o.pad_right)
        };
        let spec = ConvSpec { stride: o.stride, dilation: o.dilation, groups: o.groups, pad_left: pl, pad_right: pr };
        let y = g.conv1d(x, w, spec);
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_bias(y, b)
            }
            None => y,
        }
    }

    /// One power-iteration refresh of the spectral-norm singular vectors (no-op otherwise).
    pub fn refresh_spectral_norm<T: Real>(&self, store: &mut ParamStore<T>) {
        power_iteration(store, self.weight);
    }

    pub fn options(&self) -> &ConvOptions {
        &self.opts
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    weight: WeightParam,
    bias: Option<ParamId>,
    spec: ConvTransposeSpec,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        spec: ConvTransposeSpec,
        norm: Norm,
        init: Init,
    ) -> Self {
        // framework convention: transposed-conv fan-in is computed from dim 1
        let fan_in = c_out * kernel;
        let weight = make_weight(store, rng, name, vec![c_in, c_out, kernel], fan_in, init, norm);
        let b = uniform_tensor(rng, vec![c_out], 1.0 / (fan_in as f64).sqrt());
        let bias = Some(store.add(format!("{name}.bias"), b, true));
        Self { weight, bias, spec }
    }

    /// Upsampling stage by `ratio` with kernel `2·ratio` (output length `ratio · L`).
    pub fn upsampler<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        ratio: usize,
        init: Init,
    ) -> Self {
        let spec = ConvTransposeSpec { stride: ratio, padding: ratio / 2 + ratio % 2, output_padding: ratio % 2 };
        Self::new(store, rng, name, c_in, c_out, 2 * ratio, spec, Norm::Weight, init)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = resolve_weight(g, store, self.weight);
        let y = g.conv_transpose1d(x, w, self.spec);
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_bias(y, b)
            }
            None => y,
        }
    }

    pub fn spec(&self) -> ConvTransposeSpec {
        self.spec
    }
}
