//! Structural description of a network's time axis, used for analytic
//! receptive-field computation.

use crate::error::{Error, Result};

/// One time-axis operation. Channel mixing does not matter here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Stride-1 convolution; `pad_left` positions of padding precede the input.
    Conv { kernel: usize, dilation: usize, pad_left: usize },
    ConvTranspose { kernel: usize, stride: usize, padding: usize },
    /// Nearest-neighbour repetition by `factor`.
    Upsample { factor: usize },
    /// Activations, 1×1 convolutions, gates: position-wise maps.
    Pointwise,
}

#[derive(Clone, Debug)]
enum Node {
    Input,
    /// A source that does not depend on the input (noise, biases).
    Constant,
    Layer { layer: Layer, from: usize },
    Sum(Vec<usize>),
}

/// A directed acyclic graph of [`Layer`]s with a single input and the last
/// node as output.
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: Vec<Node>,
}

/// Handle to a node of a [`Topology`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl Default for Topology {
    fn default() -> Self {
        Self::new()
    }
}

impl Topology {
    pub fn new() -> Self {
        Self { nodes: vec![Node::Input] }
    }

    pub fn input(&self) -> NodeId {
        NodeId(0)
    }

    pub fn constant(&mut self) -> NodeId {
        self.nodes.push(Node::Constant);
        NodeId(self.nodes.len() - 1)
    }

    pub fn layer(&mut self, from: NodeId, layer: Layer) -> NodeId {
        self.nodes.push(Node::Layer { layer, from: from.0 });
        NodeId(self.nodes.len() - 1)
    }

    /// Applies `layers` in sequence starting at `from`.
    pub fn chain(&mut self, from: NodeId, layers: &[Layer]) -> NodeId {
        layers.iter().fold(from, |n, &l| self.layer(n, l))
    }

    pub fn sum(&mut self, inputs: &[NodeId]) -> NodeId {
        self.nodes.push(Node::Sum(inputs.iter().map(|n| n.0).collect()));
        NodeId(self.nodes.len() - 1)
    }

    /// A plain sequential stack.
    pub fn sequential(layers: &[Layer]) -> Self {
        let mut t = Self::new();
        t.chain(t.input(), layers);
        t
    }

    /// Span (in output positions) affected by one input position, taking
    /// the last node as the output.
    pub fn receptive_field(&self) -> Result<usize> {
        self.receptive_field_at(NodeId(self.nodes.len() - 1))
    }

    /// Same as [`Topology::receptive_field`] for an arbitrary node.
    pub fn receptive_field_at(&self, node: NodeId) -> Result<usize> {
        let mut spans: Vec<Option<(i64, i64)>> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let s = match n {
                Node::Input => Some((0, 0)),
                Node::Constant => None,
                Node::Layer { layer, from } => spans[*from].map(|iv| propagate(*layer, iv)).transpose()?,
                Node::Sum(inputs) => inputs.iter().filter_map(|&i| spans[i]).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))),
            };
            spans.push(s);
        }
        let (lo, hi) = spans[node.0].ok_or_else(|| Error::Config("output does not depend on the input".into()))?;
        Ok((hi - lo + 1) as usize)
    }
}

fn propagate(layer: Layer, (lo, hi): (i64, i64)) -> Result<(i64, i64)> {
    Ok(match layer {
        Layer::Conv { kernel, dilation, pad_left } => {
            if kernel == 0 || dilation == 0 {
                return Err(Error::Config("convolution with zero kernel or dilation".into()));
            }
            let reach = ((kernel - 1) * dilation) as i64;
            (lo + pad_left as i64 - reach, hi + pad_left as i64)
        }
        Layer::ConvTranspose { kernel, stride, padding } => {
            if kernel == 0 || stride == 0 {
                return Err(Error::Config("transposed convolution with zero kernel or stride".into()));
            }
            let (s, p) = (stride as i64, padding as i64);
            (lo * s - p, hi * s - p + kernel as i64 - 1)
        }
        Layer::Upsample { factor } => {
            if factor == 0 {
                return Err(Error::Config("upsampling by zero".into()));
            }
            let f = factor as i64;
            (lo * f, hi * f + f - 1)
        }
        Layer::Pointwise => (lo, hi),
    })
}

/// Zero-padded "same" convolution.
pub(crate) fn same_conv(kernel: usize, dilation: usize) -> Layer {
    Layer::Conv { kernel, dilation, pad_left: (kernel - 1) * dilation / 2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv() {
        assert_eq!(Topology::sequential(&[same_conv(3, 1)]).receptive_field().unwrap(), 3);
    }

    #[test]
    fn dilated_stack() {
        let t = Topology::sequential(&[same_conv(3, 1), same_conv(3, 2), same_conv(3, 4)]);
        assert_eq!(t.receptive_field().unwrap(), 15);
    }

    #[test]
    fn residual_branch_takes_hull() {
        let mut t = Topology::new();
        let c = t.layer(t.input(), same_conv(5, 1));
        t.sum(&[t.input(), c]);
        assert_eq!(t.receptive_field().unwrap(), 5);
    }

    #[test]
    fn upsampling_scales_span() {
        let t = Topology::sequential(&[Layer::Upsample { factor: 256 }, Layer::Pointwise]);
        assert_eq!(t.receptive_field().unwrap(), 256);
        let t = Topology::sequential(&[Layer::ConvTranspose { kernel: 16, stride: 8, padding: 4 }]);
        assert_eq!(t.receptive_field().unwrap(), 16);
    }
}
