use std::collections::HashMap;

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors plus a gradient accumulator of identical shapes.
///
/// Insertion order is preserved and is the order used for serialization and
/// optimizer buffers.
#[derive(Clone, Debug)]
pub struct ParamSet<T = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Gradients<T>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Gradients {
                tensors: Vec::new(),
            },
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let id = self.values.len();
        self.grads.tensors.push(Tensor::zeros(value.dims()));
        self.values.push(value);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(ParamId(id))
    }

    /// Looks up `name` and checks that it has the expected shape.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<ParamId> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let found = self.values[id.0].dims();
        if found != dims {
            return Err(Error::shape(name, dims, found));
        }
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn grads(&self) -> &Gradients<T> {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients<T> {
        &mut self.grads
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> (&mut [Tensor<T>], &mut Gradients<T>) {
        (&mut self.values, &mut self.grads)
    }

    pub fn zero_grad(&mut self) {
        self.grads.zero();
    }

    /// Adds a worker's gradient buffer into the accumulator.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        self.grads.add(grads);
    }

    pub fn zeros_like_grads(&self) -> Gradients<T> {
        Gradients {
            tensors: self.values.iter().map(|v| Tensor::zeros(v.dims())).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: Gradients {
                tensors: self.grads.tensors.iter().map(Tensor::cast).collect(),
            },
            index: self.index.clone(),
        }
    }

    /// Verifies that `self` has exactly the names and shapes of `expected`.
    pub fn check_compatible<U: Real>(&self, expected: &ParamSet<U>) -> Result<()> {
        for (name, tensor) in expected.iter() {
            let found = self
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            if found.dims() != tensor.dims() {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    expected: tensor.dims().to_vec(),
                    found: found.dims().to_vec(),
                });
            }
        }
        if let Some(extra) = self.names().find(|n| expected.id(n).is_none()) {
            return Err(Error::UnexpectedTensor(extra.to_string()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }
}

/// Gradient buffer aligned with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        self.tensors[id.0].data_mut()
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(T::zero());
        }
    }

    pub fn add(&mut self, other: &Gradients<T>) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            super::tensor::add_acc(dst.data_mut(), src.data());
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data().iter().all(|v| *v == T::zero()))
    }
}

/// Uniform Glorot initialization for a `rows x cols` matrix.
pub fn glorot<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("glorot dims are positive")
}
