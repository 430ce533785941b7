use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered collection of named trainable tensors.
///
/// Insertion order is the canonical order used by the optimizer, gradient
/// buffers and checkpoints.
#[derive(Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, tensor });
        id
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.params.iter().map(|p| &p.tensor)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.params.iter_mut().map(|p| &mut p.tensor)
    }

    /// Total number of scalar entries over all tensors.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Zero tensors shaped like every parameter, in store order.
    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .map(|p| Tensor::zeros(p.tensor.shape()))
            .collect()
    }

    /// Replaces every tensor with the same-named one from `other`, checking
    /// that names, order and shapes agree.
    pub fn load_from(&mut self, other: &[(String, Tensor<T>)]) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: model has {}, source has {}",
                self.params.len(),
                other.len()
            )));
        }
        for (p, (name, t)) in self.params.iter_mut().zip(other) {
            if &p.name != name {
                return Err(Error::Config(format!(
                    "parameter order mismatch: expected {}, found {name}",
                    p.name
                )));
            }
            if p.tensor.shape() != t.shape() {
                return Err(Error::shape("load_params", p.tensor.shape(), t.shape()));
            }
            p.tensor = t.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

impl<T> std::fmt::Debug for ParamStore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map()
            .entries(self.params.iter().map(|p| (&p.name, p.tensor.shape())))
            .finish()
    }
}

/// How a freshly allocated parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    TruncNormal(f64),
    Zeros,
    Ones,
}

/// Allocator used by module constructors. Lets the same construction code
/// either materialize parameters or just record their shapes.
pub trait ParamAlloc {
    fn alloc(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId;
}

/// Materializes parameters into a store, drawing random values from `rng`
/// in allocation order.
pub struct Initializer<'a, T, R> {
    pub store: &'a mut ParamStore<T>,
    pub rng: R,
    /// Multiplies the standard deviation of every random init.
    pub std_scale: f64,
}

impl<'a, T, R> Initializer<'a, T, R> {
    pub fn new(store: &'a mut ParamStore<T>, rng: R) -> Self {
        Initializer {
            store,
            rng,
            std_scale: 1.0,
        }
    }
}

impl<T: Scalar, R: Rng> ParamAlloc for Initializer<'_, T, R> {
    fn alloc(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let tensor = match init {
            Init::TruncNormal(std) => trunc_normal(&mut self.rng, shape, std * self.std_scale),
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
        };
        self.store.add(name, tensor)
    }
}

/// Records parameter names and shapes without allocating storage.
#[derive(Clone, Debug, Default)]
pub struct ShapeRecorder {
    pub params: Vec<(String, Vec<usize>)>,
}

impl ShapeRecorder {
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

impl ParamAlloc for ShapeRecorder {
    fn alloc(&mut self, name: &str, shape: &[usize], _init: Init) -> ParamId {
        self.params.push((name.to_string(), shape.to_vec()));
        ParamId(self.params.len() - 1)
    }
}

/// Normal(0, std) samples truncated to two standard deviations by
/// rejection. Drawn in `f64` so `f32` and `f64` stores built from the same
/// seed agree up to rounding.
pub fn trunc_normal<T: Scalar>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            break T::cast_from(v);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trunc_normal_respects_bounds_and_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let x: Tensor<f64> = trunc_normal(&mut a, &[50, 20], 0.02);
        let y: Tensor<f64> = trunc_normal(&mut b, &[50, 20], 0.02);
        assert!(x.bit_eq(&y));
        assert!(x.data().iter().all(|v| v.abs() <= 0.04));
        let mean = x.sum() / x.len() as f64;
        assert!(mean.abs() < 0.003);
    }

    #[test]
    fn load_rejects_mismatched_shapes() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::zeros([2, 2]));
        let bad = vec![("w".to_string(), Tensor::zeros([2, 3]))];
        assert!(store.load_from(&bad).is_err());
        let renamed = vec![("v".to_string(), Tensor::zeros([2, 2]))];
        assert!(store.load_from(&renamed).is_err());
    }
}
