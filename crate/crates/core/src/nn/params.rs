use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{Real, Tensor};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    store: u64,
    index: usize,
}

impl ParamId {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Named tensors owned by one network. Trainable entries are parameters;
/// the rest are buffers (e.g. spectral-norm singular vectors).
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    trainable: Vec<bool>,
    by_name: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            tensors: Vec::new(),
            trainable: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn store_id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        let index = self.tensors.len();
        self.by_name.insert(name.clone(), index);
        self.names.push(name);
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        ParamId { store: self.id, index }
    }

    fn check(&self, id: ParamId) -> usize {
        assert_eq!(id.store, self.id, "parameter belongs to a different store");
        id.index
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[self.check(id)]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        let i = self.check(id);
        &mut self.tensors[i]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[self.check(id)]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id_at(&self, index: usize) -> ParamId {
        assert!(index < self.tensors.len());
        ParamId { store: self.id, index }
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&index| ParamId { store: self.id, index })
    }

    /// `(name, tensor, trainable)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, bool)> {
        self.names.iter().zip(&self.tensors).zip(&self.trainable).map(|((n, t), &tr)| (n.as_str(), t, tr))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.tensors.len()).filter(|&i| self.trainable[i]).map(|index| ParamId { store: self.id, index }).collect()
    }

    /// Same names and handles with every tensor converted to `U`.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            id: self.id,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            trainable: self.trainable.clone(),
            by_name: self.by_name.clone(),
        }
    }

    /// Total number of trainable scalars.
    pub fn count_trainable(&self) -> usize {
        self.tensors.iter().zip(&self.trainable).filter(|(_, &t)| t).map(|(t, _)| t.numel()).sum()
    }
}

/// Conv weight initialisation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `N(0, std²)` weights.
    Normal(f64),
    /// Uniform in `±1/sqrt(fan_in)` (the usual framework default).
    FanIn,
}

pub(crate) fn normal_tensor<T: Real, R: Rng>(rng: &mut R, shape: Vec<usize>, std: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(z * std)
        })
        .collect();
    Tensor::new(shape, data)
}

pub(crate) fn uniform_tensor<T: Real, R: Rng>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape, data)
}

pub(crate) fn init_weight<T: Real, R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize, init: Init) -> Tensor<T> {
    match init {
        Init::Normal(std) => normal_tensor(rng, shape, std),
        Init::FanIn => uniform_tensor(rng, shape, 1.0 / (fan_in.max(1) as f64).sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_only_trainable_entries() {
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor::zeros(vec![2, 3]), true);
        s.add("u", Tensor::zeros(vec![5]), false);
        assert_eq!(s.count_trainable(), 6);
        assert_eq!(s.trainable_ids().len(), 1);
        assert!(s.by_name("u").is_some());
    }

    #[test]
    #[should_panic(expected = "different store")]
    fn foreign_ids_are_rejected() {
        let mut a = ParamStore::<f32>::new();
        let b = ParamStore::<f32>::new();
        let id = a.add("x", Tensor::zeros(vec![1]), true);
        let _ = b.tensor(id);
    }
}
