//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are
//! addressed by [`Var`] handles; [`Graph::backward`] walks the tape in reverse
//! and returns the gradients of a scalar node with respect to every node that
//! requires them.

use std::collections::{HashMap, HashSet};

use super::kernels::{self, ConvDims, ConvSpec, ConvTransposeSpec, PadMode};
use super::params::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    LeakyRelu(Var, T),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Conv1d { x: Var, w: Var, spec: ConvSpec },
    ConvTranspose1d { x: Var, w: Var, spec: ConvTransposeSpec },
    Pad { x: Var, left: usize, right: usize, mode: PadMode },
    AvgPool1d { x: Var, kernel: usize, stride: usize, padding: usize },
    Upsample { x: Var, factor: usize },
    Narrow { x: Var, start: usize, len: usize },
    Reshape(Var),
    FoldPeriod { x: Var, period: usize },
    Magnitude { x: Var },
    ClampLog { x: Var, floor: T },
    WeightNorm { v: Var, g: Var },
    SpectralNorm { w: Var, outer: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    frozen_stores: HashSet<u64>,
    linear: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id).and_then(|v| self.get(*v))
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: HashMap::new(), frozen_stores: HashSet::new(), linear: false }
    }

    /// A graph whose pointwise nonlinearities act as the identity. Used to
    /// probe the linear structure (receptive field) of a network.
    pub fn linearized() -> Self {
        Self { linear: true, ..Self::new() }
    }

    pub fn is_linearized(&self) -> bool {
        self.linear
    }

    /// Parameters of `store` enter this graph as constants.
    pub fn freeze(&mut self, store: &ParamStore<T>) {
        self.frozen_stores.insert(store.store_id());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Loads a parameter onto the tape (once per graph).
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let trainable = store.is_trainable(id) && !self.frozen_stores.contains(&store.store_id());
        let v = self.push(store.tensor(id).clone(), Op::Leaf, trainable);
        self.params.insert(id, v);
        v
    }

    /// Copies the value of `x` into a new constant leaf.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scalar_value(&self, v: Var) -> T {
        let t = &self.nodes[v.0].value;
        assert_eq!(t.numel(), 1, "not a scalar");
        t.data()[0]
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        Tensor::new(ta.shape().to_vec(), ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |x, y| x + y);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |x, y| x - y);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |x, y| x * y);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    /// Sums a list of same-shaped nodes left to right.
    pub fn sum_all(&mut self, xs: &[Var]) -> Var {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    /// `x[b, c, l] + bias[c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        let bv = self.nodes[bias.0].value.data();
        assert_eq!(bv.len(), c, "bias length mismatch");
        let mut out = self.nodes[x.0].value.clone();
        let data = out.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let row = &mut data[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                for v in row.iter_mut() {
                    *v = *v + bv[ci];
                }
            }
        }
        self.binary(x, bias, out, Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.nodes[x.0].value.map(|a| a * s);
        self.unary(x, v, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        let v = self.nodes[x.0].value.map(|a| a + s);
        self.unary(x, v, Op::AddScalar(x))
    }

    fn identity(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.clone();
        self.unary(x, v, Op::Scale(x, T::one()))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        if self.linear {
            return self.identity(x);
        }
        let v = self.nodes[x.0].value.map(|a| if a > T::zero() { a } else { a * slope });
        self.unary(x, v, Op::LeakyRelu(x, slope))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        if self.linear {
            return self.identity(x);
        }
        let v = self.nodes[x.0].value.map(|a| a.max(T::zero()));
        self.unary(x, v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        if self.linear {
            return self.identity(x);
        }
        let v = self.nodes[x.0].value.map(|a| a.tanh());
        self.unary(x, v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        if self.linear {
            return self.identity(x);
        }
        let v = self.nodes[x.0].value.map(|a| T::one() / (T::one() + (-a).exp()));
        self.unary(x, v, Op::Sigmoid(x))
    }

    /// Gated activation `tanh(a) ⊙ sigmoid(b)`. A linearised graph uses
    /// `(a + b) / 2`, keeping the dependence on both inputs.
    pub fn gated_tanh(&mut self, a: Var, b: Var) -> Var {
        if self.linear {
            let s = self.add(a, b);
            return self.scale(s, T::from_f64_lossy(0.5));
        }
        let t = self.tanh(a);
        let s = self.sigmoid(b);
        self.mul(t, s)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.map(|a| a.abs());
        self.unary(x, v, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.map(|a| a * a);
        self.unary(x, v, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.nodes[x.0].value.data().iter().copied().sum();
        self.unary(x, Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let n = T::from_usize(t.numel()).unwrap();
        let s: T = t.data().iter().copied().sum();
        self.unary(x, Tensor::scalar(s / n), Op::Mean(x))
    }

    /// 1-D convolution of `x [B, C_in, L]` with `w [C_out, C_in / groups, K]`.
    pub fn conv1d(&mut self, x: Var, w: Var, spec: ConvSpec) -> Var {
        let d = self.conv_dims(x, w, &spec);
        let out = kernels::conv1d_forward(self.nodes[x.0].value.data(), self.nodes[w.0].value.data(), d, &spec);
        let t = Tensor::new(vec![d.batch, d.c_out, d.len_out], out);
        self.binary(x, w, t, Op::Conv1d { x, w, spec })
    }

    fn conv_dims(&self, x: Var, w: Var, spec: &ConvSpec) -> ConvDims {
        let (batch, c_in, len_in) = self.nodes[x.0].value.dims3();
        let (c_out, cig, kernel) = self.nodes[w.0].value.dims3();
        assert!(spec.groups > 0 && c_in % spec.groups == 0 && c_out % spec.groups == 0, "bad group count");
        assert_eq!(cig * spec.groups, c_in, "conv weight expects {} input channels, got {c_in}", cig * spec.groups);
        let len_out = spec.out_len(len_in, kernel).unwrap_or_else(|| panic!("conv input of length {len_in} too short"));
        ConvDims { batch, c_in, len_in, c_out, kernel, len_out }
    }

    /// Transposed convolution of `x [B, C_in, L]` with `w [C_in, C_out, K]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, spec: ConvTransposeSpec) -> Var {
        let d = self.convt_dims(x, w, &spec);
        let out =
            kernels::conv_transpose1d_forward(self.nodes[x.0].value.data(), self.nodes[w.0].value.data(), d, &spec);
        let t = Tensor::new(vec![d.batch, d.c_out, d.len_out], out);
        self.binary(x, w, t, Op::ConvTranspose1d { x, w, spec })
    }

    fn convt_dims(&self, x: Var, w: Var, spec: &ConvTransposeSpec) -> ConvDims {
        let (batch, c_in, len_in) = self.nodes[x.0].value.dims3();
        let (wc_in, c_out, kernel) = self.nodes[w.0].value.dims3();
        assert_eq!(wc_in, c_in, "transposed conv channel mismatch");
        let len_out = spec.out_len(len_in, kernel).expect("transposed conv output length");
        ConvDims { batch, c_in, len_in, c_out, kernel, len_out }
    }

    pub fn pad(&mut self, x: Var, left: usize, right: usize, mode: PadMode) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        let out = kernels::pad_forward(self.nodes[x.0].value.data(), b * c, l, left, right, mode);
        let t = Tensor::new(vec![b, c, l + left + right], out);
        self.unary(x, t, Op::Pad { x, left, right, mode })
    }

    pub fn avg_pool1d(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        let out = kernels::avg_pool_forward(self.nodes[x.0].value.data(), b * c, l, kernel, stride, padding);
        let lo = kernels::avg_pool_out_len(l, kernel, stride, padding);
        self.unary(x, Tensor::new(vec![b, c, lo], out), Op::AvgPool1d { x, kernel, stride, padding })
    }

    /// Nearest-neighbour upsampling along time.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        let src = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(b * c * l * factor);
        for row in src.chunks(l.max(1)) {
            for &v in row {
                out.extend(std::iter::repeat_n(v, factor));
            }
        }
        self.unary(x, Tensor::new(vec![b, c, l * factor], out), Op::Upsample { x, factor })
    }

    /// Channel slice `[start, start + len)` of `x [B, C, L]`.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        assert!(start + len <= c, "narrow out of range");
        let src = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(b * len * l);
        for bi in 0..b {
            out.extend_from_slice(&src[(bi * c + start) * l..(bi * c + start + len) * l]);
        }
        self.unary(x, Tensor::new(vec![b, len, l], out), Op::Narrow { x, start, len })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = self.nodes[x.0].value.clone().reshape(shape);
        self.unary(x, t, Op::Reshape(x))
    }

    /// `[B, C, L]` with `L % period == 0` to `[B * period, C, L / period]`:
    /// every phase of the period becomes its own sequence.
    pub fn fold_period(&mut self, x: Var, period: usize) -> Var {
        let (b, c, l) = self.nodes[x.0].value.dims3();
        assert_eq!(l % period, 0, "length must be a multiple of the period");
        let h = l / period;
        let src = self.nodes[x.0].value.data();
        let mut out = vec![T::zero(); b * c * l];
        for bi in 0..b {
            for ci in 0..c {
                for t in 0..h {
                    for j in 0..period {
                        out[((bi * period + j) * c + ci) * h + t] = src[(bi * c + ci) * l + t * period + j];
                    }
                }
            }
        }
        self.unary(x, Tensor::new(vec![b * period, c, h], out), Op::FoldPeriod { x, period })
    }

    /// `[B, 2F, T]` holding real parts then imaginary parts to `sqrt(re² + im² + eps)`.
    pub fn magnitude(&mut self, x: Var, eps: T) -> Var {
        let (b, c2, l) = self.nodes[x.0].value.dims3();
        assert_eq!(c2 % 2, 0);
        let f = c2 / 2;
        let src = self.nodes[x.0].value.data();
        let mut out = vec![T::zero(); b * f * l];
        for bi in 0..b {
            for fi in 0..f {
                for t in 0..l {
                    let re = src[(bi * c2 + fi) * l + t];
                    let im = src[(bi * c2 + f + fi) * l + t];
                    out[(bi * f + fi) * l + t] = (re * re + im * im + eps).sqrt();
                }
            }
        }
        self.unary(x, Tensor::new(vec![b, f, l], out), Op::Magnitude { x })
    }

    /// `ln(max(x, floor))`.
    pub fn clamp_log(&mut self, x: Var, floor: T) -> Var {
        let v = self.nodes[x.0].value.map(|a| a.max(floor).ln());
        self.unary(x, v, Op::ClampLog { x, floor })
    }

    /// Weight normalisation: row `r` of the result is `g[r] · v[r] / ‖v[r]‖`.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Var {
        let tv = &self.nodes[v.0].value;
        let rows = tv.shape()[0];
        let cols = tv.numel() / rows;
        let gv = self.nodes[g.0].value.data();
        assert_eq!(gv.len(), rows, "weight norm gain has wrong length");
        let mut out = tv.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let norm = row.iter().map(|&a| a * a).sum::<T>().sqrt();
            let s = gv[r] / norm;
            for a in row.iter_mut() {
                *a = *a * s;
            }
        }
        self.binary(v, g, out, Op::WeightNorm { v, g })
    }

    /// Spectral normalisation `w / σ` with `σ = ⟨w, u vᵀ⟩` for fixed singular-vector estimates.
    pub fn spectral_norm(&mut self, w: Var, outer: Tensor<T>) -> Var {
        let tw = &self.nodes[w.0].value;
        assert_eq!(tw.numel(), outer.numel());
        let sigma: T = tw.data().iter().zip(outer.data()).map(|(&a, &b)| a * b).sum();
        let out = tw.map(|a| a / sigma);
        self.unary(w, out, Op::SpectralNorm { w, outer })
    }

    /// Reverse pass from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let seed = Tensor::full(self.nodes[loss.0].value.shape().to_vec(), T::one());
        self.backward_with(loss, seed)
    }

    /// Reverse pass seeded with an explicit output cotangent.
    pub fn backward_with(&self, out: Var, seed: Tensor<T>) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        Gradients { by_node: grads, params: self.params.clone() }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn elementwise(&self, g: &Tensor<T>, x: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let xv = &self.nodes[x.0].value;
        Tensor::new(g.shape().to_vec(), g.data().iter().zip(xv.data()).map(|(&gi, &xi)| f(gi, xi)).collect())
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let ga = self.elementwise(g, *b, |gi, bi| gi * bi);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let gb = self.elementwise(g, *a, |gi, ai| gi * ai);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*bias) {
                    let (b, c, l) = g.dims3();
                    let mut gb = vec![T::zero(); c];
                    for bi in 0..b {
                        for (ci, slot) in gb.iter_mut().enumerate() {
                            let row = &g.data()[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                            *slot = *slot + row.iter().copied().sum::<T>();
                        }
                    }
                    let shape = self.nodes[bias.0].value.shape().to_vec();
                    self.accumulate(grads, *bias, Tensor::new(shape, gb));
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.map(|v| v * *s)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::LeakyRelu(x, slope) => {
                let gx = self.elementwise(g, *x, |gi, xi| if xi > T::zero() { gi } else { gi * *slope });
                self.accumulate(grads, *x, gx);
            }
            Op::Relu(x) => {
                let gx = self.elementwise(g, *x, |gi, xi| if xi > T::zero() { gi } else { T::zero() });
                self.accumulate(grads, *x, gx);
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let gx = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(y.data()).map(|(&gi, &yi)| gi * (T::one() - yi * yi)).collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let gx = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(y.data()).map(|(&gi, &yi)| gi * yi * (T::one() - yi)).collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::Abs(x) => {
                let gx = self.elementwise(g, *x, |gi, xi| gi * xi.signum() * T::from_u8((xi != T::zero()) as u8).unwrap());
                self.accumulate(grads, *x, gx);
            }
            Op::Square(x) => {
                let two = T::from_f64_lossy(2.0);
                let gx = self.elementwise(g, *x, |gi, xi| gi * two * xi);
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let shape = self.nodes[x.0].value.shape().to_vec();
                self.accumulate(grads, *x, Tensor::full(shape, g.data()[0]));
            }
            Op::Mean(x) => {
                let xv = &self.nodes[x.0].value;
                let n = T::from_usize(xv.numel()).unwrap();
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), g.data()[0] / n));
            }
            Op::Conv1d { x, w, spec } => {
                let d = self.conv_dims(*x, *w, spec);
                let (dx, dw) = kernels::conv1d_backward(
                    self.nodes[x.0].value.data(),
                    self.nodes[w.0].value.data(),
                    g.data(),
                    d,
                    spec,
                    self.wants(*x),
                    self.wants(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(self.nodes[x.0].value.shape().to_vec(), dx));
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, Tensor::new(self.nodes[w.0].value.shape().to_vec(), dw));
                }
            }
            Op::ConvTranspose1d { x, w, spec } => {
                let d = self.convt_dims(*x, *w, spec);
                let (dx, dw) = kernels::conv_transpose1d_backward(
                    self.nodes[x.0].value.data(),
                    self.nodes[w.0].value.data(),
                    g.data(),
                    d,
                    spec,
                    self.wants(*x),
                    self.wants(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(self.nodes[x.0].value.shape().to_vec(), dx));
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, Tensor::new(self.nodes[w.0].value.shape().to_vec(), dw));
                }
            }
            Op::Pad { x, left, right, mode } => {
                let (b, c, l) = self.nodes[x.0].value.dims3();
                let dx = kernels::pad_backward(g.data(), b * c, l, *left, *right, *mode);
                self.accumulate(grads, *x, Tensor::new(vec![b, c, l], dx));
            }
            Op::AvgPool1d { x, kernel, stride, padding } => {
                let (b, c, l) = self.nodes[x.0].value.dims3();
                let dx = kernels::avg_pool_backward(g.data(), b * c, l, *kernel, *stride, *padding);
                self.accumulate(grads, *x, Tensor::new(vec![b, c, l], dx));
            }
            Op::Upsample { x, factor } => {
                let shape = self.nodes[x.0].value.shape().to_vec();
                let dx = g.data().chunks(*factor).map(|c| c.iter().copied().sum()).collect();
                self.accumulate(grads, *x, Tensor::new(shape, dx));
            }
            Op::Narrow { x, start, len } => {
                let (b, c, l) = self.nodes[x.0].value.dims3();
                let mut dx = vec![T::zero(); b * c * l];
                for bi in 0..b {
                    dx[(bi * c + start) * l..(bi * c + start + len) * l]
                        .copy_from_slice(&g.data()[bi * len * l..(bi + 1) * len * l]);
                }
                self.accumulate(grads, *x, Tensor::new(vec![b, c, l], dx));
            }
            Op::Reshape(x) => {
                let shape = self.nodes[x.0].value.shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(shape));
            }
            Op::FoldPeriod { x, period } => {
                let (b, c, l) = self.nodes[x.0].value.dims3();
                let h = l / period;
                let mut dx = vec![T::zero(); b * c * l];
                for bi in 0..b {
                    for ci in 0..c {
                        for t in 0..h {
                            for j in 0..*period {
                                dx[(bi * c + ci) * l + t * period + j] = g.data()[((bi * period + j) * c + ci) * h + t];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![b, c, l], dx));
            }
            Op::Magnitude { x, .. } => {
                let xv = &self.nodes[x.0].value;
                let (b, c2, l) = xv.dims3();
                let f = c2 / 2;
                let mut dx = vec![T::zero(); b * c2 * l];
                for bi in 0..b {
                    for fi in 0..f {
                        for t in 0..l {
                            let m = node.value.data()[(bi * f + fi) * l + t];
                            let gi = g.data()[(bi * f + fi) * l + t] / m;
                            let (ri, ii) = ((bi * c2 + fi) * l + t, (bi * c2 + f + fi) * l + t);
                            dx[ri] = gi * xv.data()[ri];
                            dx[ii] = gi * xv.data()[ii];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![b, c2, l], dx));
            }
            Op::ClampLog { x, floor } => {
                let gx = self.elementwise(g, *x, |gi, xi| if xi > *floor { gi / xi } else { T::zero() });
                self.accumulate(grads, *x, gx);
            }
            Op::WeightNorm { v, g: gain } => {
                let tv = &self.nodes[v.0].value;
                let rows = tv.shape()[0];
                let cols = tv.numel() / rows;
                let gv = self.nodes[gain.0].value.data();
                let mut dv = vec![T::zero(); tv.numel()];
                let mut dg = vec![T::zero(); rows];
                for r in 0..rows {
                    let vr = &tv.data()[r * cols..(r + 1) * cols];
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let norm = vr.iter().map(|&a| a * a).sum::<T>().sqrt();
                    let dot: T = vr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    dg[r] = dot / norm;
                    let s = gv[r] / norm;
                    let k = dot / (norm * norm);
                    for c in 0..cols {
                        dv[r * cols + c] = s * (gr[c] - k * vr[c]);
                    }
                }
                if self.wants(*v) {
                    self.accumulate(grads, *v, Tensor::new(tv.shape().to_vec(), dv));
                }
                if self.wants(*gain) {
                    let shape = self.nodes[gain.0].value.shape().to_vec();
                    self.accumulate(grads, *gain, Tensor::new(shape, dg));
                }
            }
            Op::SpectralNorm { w, outer } => {
                let tw = &self.nodes[w.0].value;
                let sigma: T = tw.data().iter().zip(outer.data()).map(|(&a, &b)| a * b).sum();
                let gw: T = g.data().iter().zip(tw.data()).map(|(&a, &b)| a * b).sum();
                let k = gw / (sigma * sigma);
                let dw = g
                    .data()
                    .iter()
                    .zip(outer.data())
                    .map(|(&gi, &oi)| gi / sigma - k * oi)
                    .collect();
                self.accumulate(grads, *w, Tensor::new(tw.shape().to_vec(), dw));
            }
        }
    }
}
