use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::ParamStore;
use super::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    /// First and second moments, indexed like the store.
    pub moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, store: &ParamStore<T>) -> Self {
        let moments = store
            .iter()
            .map(|(_, t, trainable)| {
                trainable.then(|| (Tensor::zeros(t.shape().to_vec()), Tensor::zeros(t.shape().to_vec())))
            })
            .collect();
        Self { config, step: 0, moments }
    }

    /// Applies one update. Parameters without a gradient keep their value but
    /// still receive weight decay, as in the reference optimizer when gradients are zero.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - c.beta1), T::from_f64_lossy(1.0 - c.beta2));
        let decay = T::from_f64_lossy(1.0 - lr * c.weight_decay);
        let step_size = T::from_f64_lossy(lr / bc1);
        let bc2_sqrt = T::from_f64_lossy(bc2.sqrt());
        let eps = T::from_f64_lossy(c.eps);
        for id in store.trainable_ids() {
            let Some((m, v)) = self.moments[id.index()].as_mut() else { continue };
            let grad = grads.param(id);
            let p = store.tensor_mut(id);
            let n = p.numel();
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..n {
                let gi = grad.map_or(T::zero(), |g| g.data()[i]);
                pd[i] = pd[i] * decay;
                md[i] = b1 * md[i] + one_b1 * gi;
                vd[i] = b2 * vd[i] + one_b2 * gi * gi;
                let denom = vd[i].sqrt() / bc2_sqrt + eps;
                pd[i] = pd[i] - step_size * md[i] / denom;
            }
        }
    }
}
