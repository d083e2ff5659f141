use crate::dsp::{MelConfig, MAGNITUDE_EPS};
use crate::error::Result;
use crate::nn::{ConvSpec, Graph, PadMode, Real, Tensor, Var};

/// Log-mel analysis expressed as graph operations so that the
/// reconstruction loss can be differentiated through it. Numerically it
/// follows the same route as [`crate::dsp::MelAnalyzer`].
#[derive(Clone, Debug)]
pub struct MelFrontend<T: Real> {
    cfg: MelConfig,
    /// `[2·bins, 1, n_fft]`: windowed cosines, then windowed negated sines.
    basis: Tensor<T>,
    /// `[n_mels, bins, 1]`.
    filterbank: Tensor<T>,
}

impl<T: Real> MelFrontend<T> {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let (n_fft, bins) = (cfg.n_fft, cfg.n_bins());
        let window = cfg.window();
        let mut basis = vec![T::zero(); 2 * bins * n_fft];
        for k in 0..bins {
            for n in 0..n_fft {
                // reduce k·n mod n_fft first so the phase stays exact for large indices
                let phase = 2.0 * std::f64::consts::PI * ((k * n) % n_fft) as f64 / n_fft as f64;
                basis[k * n_fft + n] = T::from_f64_lossy(window[n] * phase.cos());
                basis[(bins + k) * n_fft + n] = T::from_f64_lossy(-window[n] * phase.sin());
            }
        }
        let fb = cfg.filterbank().into_iter().map(T::from_f64_lossy).collect();
        Ok(Self {
            cfg: cfg.clone(),
            basis: Tensor::new(vec![2 * bins, 1, n_fft], basis),
            filterbank: Tensor::new(vec![cfg.n_mels, bins, 1], fb),
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// `[B, 1, L]` audio to `[B, n_mels, L / hop + 1]` natural-log mel energies.
    pub fn forward(&self, g: &mut Graph<T>, audio: Var) -> Var {
        let pad = self.cfg.n_fft / 2;
        let x = g.pad(audio, pad, pad, PadMode::Reflect);
        let basis = g.constant(self.basis.clone());
        let spec = ConvSpec { stride: self.cfg.hop_size, dilation: 1, groups: 1, pad_left: 0, pad_right: 0 };
        let stft = g.conv1d(x, basis, spec);
        let mag = g.magnitude(stft, T::from_f64_lossy(MAGNITUDE_EPS));
        let fb = g.constant(self.filterbank.clone());
        let mel = g.conv1d(mag, fb, ConvSpec::same(1, 1));
        g.clamp_log(mel, T::from_f64_lossy(self.cfg.log_floor))
    }

    /// Mean absolute difference between the log-mels of two `[B, 1, L]` signals.
    pub fn l1(&self, g: &mut Graph<T>, target: Var, generated: Var) -> Var {
        let a = self.forward(g, target);
        let b = self.forward(g, generated);
        let d = g.sub(a, b);
        let d = g.abs(d);
        g.mean(d)
    }
}
