//! Minimal reverse-mode autograd engine for 1-D convolutional networks.

mod graph;
pub mod kernels;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use kernels::{ConvSpec, ConvTransposeSpec, PadMode};
pub use layers::{Conv1d, ConvOptions, ConvTranspose1d, Norm};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Init, ParamId, ParamStore};
pub use tensor::{Real, Tensor};
