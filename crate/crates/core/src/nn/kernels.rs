//! Raw forward/backward kernels on `[batch, channels, length]` buffers.
//!
//! Batch items are processed independently (in parallel); any reduction over
//! the batch happens afterwards in item order, so results do not depend on
//! thread scheduling.

use rayon::prelude::*;

use super::tensor::{gemm, MatRef, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self { stride: 1, dilation, groups: 1, pad_left: total / 2, pad_right: total - total / 2 }
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, kernel: usize) -> bool {
        kernel == 1 && self.stride == 1 && self.pad_left == 0 && self.pad_right == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvTransposeSpec {
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl ConvTransposeSpec {
    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        ((len.max(1) - 1) * self.stride + kernel + self.output_padding).checked_sub(2 * self.padding)
    }
}

/// Shape bookkeeping shared by the conv kernels.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub len_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub len_out: usize,
}

fn im2col<T: Real>(x: &[T], c: usize, len: usize, kernel: usize, spec: &ConvSpec, len_out: usize, cols: &mut [T]) {
    for ci in 0..c {
        let row_x = &x[ci * len..(ci + 1) * len];
        for k in 0..kernel {
            let row = &mut cols[(ci * kernel + k) * len_out..(ci * kernel + k + 1) * len_out];
            let offset = (k * spec.dilation) as isize - spec.pad_left as isize;
            for (o, slot) in row.iter_mut().enumerate() {
                let idx = (o * spec.stride) as isize + offset;
                *slot = if idx >= 0 && (idx as usize) < len { row_x[idx as usize] } else { T::zero() };
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], c: usize, len: usize, kernel: usize, spec: &ConvSpec, len_out: usize, dx: &mut [T]) {
    for ci in 0..c {
        let row_dx = &mut dx[ci * len..(ci + 1) * len];
        for k in 0..kernel {
            let row = &cols[(ci * kernel + k) * len_out..(ci * kernel + k + 1) * len_out];
            let offset = (k * spec.dilation) as isize - spec.pad_left as isize;
            for (o, &v) in row.iter().enumerate() {
                let idx = (o * spec.stride) as isize + offset;
                if idx >= 0 && (idx as usize) < len {
                    row_dx[idx as usize] = row_dx[idx as usize] + v;
                }
            }
        }
    }
}

/// Grouped, dilated, strided 1-D convolution. `w` is `[c_out, c_in / groups, kernel]`.
pub fn conv1d_forward<T: Real>(x: &[T], w: &[T], d: ConvDims, spec: &ConvSpec) -> Vec<T> {
    let g = spec.groups;
    let (cig, cog) = (d.c_in / g, d.c_out / g);
    let rows = cig * d.kernel;
    let mut out = vec![T::zero(); d.batch * d.c_out * d.len_out];
    out.par_chunks_mut(d.c_out * d.len_out).enumerate().for_each(|(b, ob)| {
        let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
        let mut cols = if spec.is_pointwise(d.kernel) { Vec::new() } else { vec![T::zero(); rows * d.len_out] };
        for gi in 0..g {
            let xg = &xb[gi * cig * d.len_in..(gi + 1) * cig * d.len_in];
            let wg = &w[gi * cog * rows..(gi + 1) * cog * rows];
            let og = &mut ob[gi * cog * d.len_out..(gi + 1) * cog * d.len_out];
            let rhs = if spec.is_pointwise(d.kernel) {
                xg
            } else {
                im2col(xg, cig, d.len_in, d.kernel, spec, d.len_out, &mut cols);
                &cols
            };
            gemm(cog, rows, d.len_out, MatRef::rows(wg, rows), MatRef::rows(rhs, d.len_out), T::zero(), og);
        }
    });
    out
}

/// Gradients of [`conv1d_forward`] w.r.t. input and/or weight.
pub fn conv1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad_out: &[T],
    d: ConvDims,
    spec: &ConvSpec,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let g = spec.groups;
    let (cig, cog) = (d.c_in / g, d.c_out / g);
    let rows = cig * d.kernel;
    let pointwise = spec.is_pointwise(d.kernel);
    let per_item: Vec<(Vec<T>, Vec<T>)> = (0..d.batch)
        .into_par_iter()
        .map(|b| {
            let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
            let gb = &grad_out[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
            let mut dx = if want_dx { vec![T::zero(); d.c_in * d.len_in] } else { Vec::new() };
            let mut dw = if want_dw { vec![T::zero(); w.len()] } else { Vec::new() };
            let mut cols = vec![T::zero(); rows * d.len_out];
            for gi in 0..g {
                let gg = &gb[gi * cog * d.len_out..(gi + 1) * cog * d.len_out];
                if want_dw {
                    let xg = &xb[gi * cig * d.len_in..(gi + 1) * cig * d.len_in];
                    let rhs: &[T] = if pointwise {
                        xg
                    } else {
                        im2col(xg, cig, d.len_in, d.kernel, spec, d.len_out, &mut cols);
                        &cols
                    };
                    let dwg = &mut dw[gi * cog * rows..(gi + 1) * cog * rows];
                    gemm(cog, d.len_out, rows, MatRef::rows(gg, d.len_out), MatRef::rows_t(rhs, d.len_out), T::zero(), dwg);
                }
                if want_dx {
                    let wg = &w[gi * cog * rows..(gi + 1) * cog * rows];
                    let dxg = &mut dx[gi * cig * d.len_in..(gi + 1) * cig * d.len_in];
                    if pointwise {
                        gemm(cig, cog, d.len_out, MatRef::rows_t(wg, rows), MatRef::rows(gg, d.len_out), T::zero(), dxg);
                    } else {
                        gemm(rows, cog, d.len_out, MatRef::rows_t(wg, rows), MatRef::rows(gg, d.len_out), T::zero(), &mut cols);
                        col2im(&cols, cig, d.len_in, d.kernel, spec, d.len_out, dxg);
                    }
                }
            }
            (dx, dw)
        })
        .collect();
    let dx = want_dx.then(|| per_item.iter().flat_map(|(dx, _)| dx.iter().copied()).collect());
    let dw = want_dw.then(|| {
        let mut acc = vec![T::zero(); w.len()];
        for (_, dw) in &per_item {
            for (a, &v) in acc.iter_mut().zip(dw) {
                *a = *a + v;
            }
        }
        acc
    });
    (dx, dw)
}

/// Transposed 1-D convolution (groups = 1). `w` is `[c_in, c_out, kernel]`.
pub fn conv_transpose1d_forward<T: Real>(x: &[T], w: &[T], d: ConvDims, spec: &ConvTransposeSpec) -> Vec<T> {
    let rows = d.c_out * d.kernel;
    let mut out = vec![T::zero(); d.batch * d.c_out * d.len_out];
    out.par_chunks_mut(d.c_out * d.len_out).enumerate().for_each(|(b, ob)| {
        let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
        let mut cols = vec![T::zero(); rows * d.len_in];
        gemm(rows, d.c_in, d.len_in, MatRef::rows_t(w, rows), MatRef::rows(xb, d.len_in), T::zero(), &mut cols);
        for co in 0..d.c_out {
            let orow = &mut ob[co * d.len_out..(co + 1) * d.len_out];
            for k in 0..d.kernel {
                let crow = &cols[(co * d.kernel + k) * d.len_in..(co * d.kernel + k + 1) * d.len_in];
                for (i, &v) in crow.iter().enumerate() {
                    let o = (i * spec.stride + k) as isize - spec.padding as isize;
                    if o >= 0 && (o as usize) < d.len_out {
                        orow[o as usize] = orow[o as usize] + v;
                    }
                }
            }
        }
    });
    out
}

pub fn conv_transpose1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad_out: &[T],
    d: ConvDims,
    spec: &ConvTransposeSpec,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let rows = d.c_out * d.kernel;
    let per_item: Vec<(Vec<T>, Vec<T>)> = (0..d.batch)
        .into_par_iter()
        .map(|b| {
            let xb = &x[b * d.c_in * d.len_in..(b + 1) * d.c_in * d.len_in];
            let gb = &grad_out[b * d.c_out * d.len_out..(b + 1) * d.c_out * d.len_out];
            let mut cols = vec![T::zero(); rows * d.len_in];
            for co in 0..d.c_out {
                let grow = &gb[co * d.len_out..(co + 1) * d.len_out];
                for k in 0..d.kernel {
                    let crow = &mut cols[(co * d.kernel + k) * d.len_in..(co * d.kernel + k + 1) * d.len_in];
                    for (i, slot) in crow.iter_mut().enumerate() {
                        let o = (i * spec.stride + k) as isize - spec.padding as isize;
                        *slot = if o >= 0 && (o as usize) < d.len_out { grow[o as usize] } else { T::zero() };
                    }
                }
            }
            let mut dx = Vec::new();
            if want_dx {
                dx = vec![T::zero(); d.c_in * d.len_in];
                gemm(d.c_in, rows, d.len_in, MatRef::rows(w, rows), MatRef::rows(&cols, d.len_in), T::zero(), &mut dx);
            }
            let mut dw = Vec::new();
            if want_dw {
                dw = vec![T::zero(); w.len()];
                gemm(d.c_in, d.len_in, rows, MatRef::rows(xb, d.len_in), MatRef::rows_t(&cols, d.len_in), T::zero(), &mut dw);
            }
            (dx, dw)
        })
        .collect();
    let dx = want_dx.then(|| per_item.iter().flat_map(|(dx, _)| dx.iter().copied()).collect());
    let dw = want_dw.then(|| {
        let mut acc = vec![T::zero(); w.len()];
        for (_, dw) in &per_item {
            for (a, &v) in acc.iter_mut().zip(dw) {
                *a = *a + v;
            }
        }
        acc
    });
    (dx, dw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    Reflect,
    Replicate,
}

/// Source index for position `j` (may be negative or past the end) of a padded signal.
pub fn pad_source(j: isize, len: usize, mode: PadMode) -> Option<usize> {
    let n = len as isize;
    if j >= 0 && j < n {
        return Some(j as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Replicate => Some(j.clamp(0, n - 1) as usize),
        PadMode::Reflect => {
            if n == 1 {
                return Some(0);
            }
            // Mirror without repeating the edge sample; bounces for pads longer than the signal.
            let period = 2 * (n - 1);
            let m = j.rem_euclid(period);
            Some(if m < n { m } else { period - m } as usize)
        }
    }
}

pub fn pad_forward<T: Real>(x: &[T], rows: usize, len: usize, left: usize, right: usize, mode: PadMode) -> Vec<T> {
    let out_len = len + left + right;
    let map: Vec<Option<usize>> = (0..out_len).map(|o| pad_source(o as isize - left as isize, len, mode)).collect();
    let mut out = vec![T::zero(); rows * out_len];
    for r in 0..rows {
        let src = &x[r * len..(r + 1) * len];
        for (o, m) in map.iter().enumerate() {
            if let Some(i) = m {
                out[r * out_len + o] = src[*i];
            }
        }
    }
    out
}

pub fn pad_backward<T: Real>(g: &[T], rows: usize, len: usize, left: usize, right: usize, mode: PadMode) -> Vec<T> {
    let out_len = len + left + right;
    let mut dx = vec![T::zero(); rows * len];
    for o in 0..out_len {
        if let Some(i) = pad_source(o as isize - left as isize, len, mode) {
            for r in 0..rows {
                dx[r * len + i] = dx[r * len + i] + g[r * out_len + o];
            }
        }
    }
    dx
}

/// Average pooling with zero padding counted in the divisor.
pub fn avg_pool_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

pub fn avg_pool_forward<T: Real>(x: &[T], rows: usize, len: usize, kernel: usize, stride: usize, padding: usize) -> Vec<T> {
    let out_len = avg_pool_out_len(len, kernel, stride, padding);
    let scale = T::one() / T::from_usize(kernel).unwrap();
    let mut out = vec![T::zero(); rows * out_len];
    for r in 0..rows {
        for o in 0..out_len {
            let mut acc = T::zero();
            for k in 0..kernel {
                let i = (o * stride + k) as isize - padding as isize;
                if i >= 0 && (i as usize) < len {
                    acc = acc + x[r * len + i as usize];
                }
            }
            out[r * out_len + o] = acc * scale;
        }
    }
    out
}

pub fn avg_pool_backward<T: Real>(g: &[T], rows: usize, len: usize, kernel: usize, stride: usize, padding: usize) -> Vec<T> {
    let out_len = avg_pool_out_len(len, kernel, stride, padding);
    let scale = T::one() / T::from_usize(kernel).unwrap();
    let mut dx = vec![T::zero(); rows * len];
    for r in 0..rows {
        for o in 0..out_len {
            let v = g[r * out_len + o] * scale;
            for k in 0..kernel {
                let i = (o * stride + k) as isize - padding as isize;
                if i >= 0 && (i as usize) < len {
                    dx[r * len + i as usize] = dx[r * len + i as usize] + v;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], d: ConvDims, s: &ConvSpec) -> Vec<f64> {
        let (cig, cog) = (d.c_in / s.groups, d.c_out / s.groups);
        let mut out = vec![0.0; d.batch * d.c_out * d.len_out];
        for b in 0..d.batch {
            for co in 0..d.c_out {
                let gi = co / cog;
                for o in 0..d.len_out {
                    let mut acc = 0.0;
                    for c in 0..cig {
                        let ci = gi * cig + c;
                        for k in 0..d.kernel {
                            let i = (o * s.stride + k * s.dilation) as isize - s.pad_left as isize;
                            if i >= 0 && (i as usize) < d.len_in {
                                acc += w[(co * cig + c) * d.kernel + k] * x[(b * d.c_in + ci) * d.len_in + i as usize];
                            }
                        }
                    }
                    out[(b * d.c_out + co) * d.len_out + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let spec = ConvSpec { stride: 2, dilation: 3, groups: 2, pad_left: 4, pad_right: 1 };
        let (c_in, c_out, kernel, len) = (4, 6, 3, 17);
        let len_out = spec.out_len(len, kernel).unwrap();
        let d = ConvDims { batch: 2, c_in, len_in: len, c_out, kernel, len_out };
        let x: Vec<f64> = (0..2 * c_in * len).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let w: Vec<f64> = (0..c_out * 2 * kernel).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.2).collect();
        let fast = conv1d_forward(&x, &w, d, &spec);
        let slow = naive_conv(&x, &w, d, &spec);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_pad_mirrors_without_edge_repeat() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let out = pad_forward(&x, 1, 4, 2, 3, PadMode::Reflect);
        assert_eq!(out, vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]);
        let out = pad_forward(&x, 1, 4, 1, 1, PadMode::Replicate);
        assert_eq!(out, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn transposed_conv_output_length() {
        // MelGAN-style 8x stage: kernel 16, stride 8, padding 4.
        let spec = ConvTransposeSpec { stride: 8, padding: 4, output_padding: 0 };
        assert_eq!(spec.out_len(10, 16), Some(80));
        // odd ratio uses output padding
        let spec = ConvTransposeSpec { stride: 3, padding: 2, output_padding: 1 };
        assert_eq!(spec.out_len(10, 6), Some(30));
    }

    #[test]
    fn avg_pool_counts_padding() {
        let x = [4.0f64; 8];
        let out = avg_pool_forward(&x, 1, 8, 4, 2, 2);
        assert_eq!(out.len(), 5);
        assert_eq!(out[0], 2.0);
        assert_eq!(out[2], 4.0);
    }
}
