//! Building blocks for comparing GAN vocoder generators under one shared
//! multi-resolution discriminator.

pub mod datasets;
pub mod discriminators;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod generators;
pub mod nn;
pub mod records;
pub mod training;

pub use error::{Error, Result};
