use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Floating point element type. Models run in `f32`; gradient checks in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) || dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape("tensor", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Column count of a rank-2 tensor (1 for vectors).
    pub fn cols(&self) -> usize {
        self.dims.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

// Small dense kernels shared by the layers. Matrices are row-major `rows x cols`.

/// `out = W x`
pub(crate) fn matvec<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += Wᵀ g`
pub(crate) fn matvec_t_acc<T: Real>(w: &[T], cols: usize, g: &[T], out: &mut [T]) {
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi == T::zero() {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += *gi * *wij;
        }
    }
}

/// `dw += g xᵀ`
pub(crate) fn outer_acc<T: Real>(dw: &mut [T], cols: usize, g: &[T], x: &[T]) {
    for (gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gi == T::zero() {
            continue;
        }
        for (d, xj) in row.iter_mut().zip(x) {
            *d += *gi * *xj;
        }
    }
}

pub(crate) fn add_acc<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc += d * d;
    }
    acc.sqrt()
}

/// L2 distance from a model-precision vector to a stored `f32` feature row.
pub fn distance_to_row<T: Real>(s: &[T], row: &[f32]) -> T {
    let mut acc = T::zero();
    for (x, y) in s.iter().zip(row) {
        let d = *x - T::of(*y as f64);
        acc += d * d;
    }
    acc.sqrt()
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_dims() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn kernels_agree_with_hand_arithmetic() {
        let w = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        matvec(&w, 2, 3, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);

        let mut back = [0.0; 3];
        matvec_t_acc(&w, 3, &[1.0, 1.0], &mut back);
        assert_eq!(back, [5.0, 7.0, 9.0]);

        let mut dw = [0.0; 6];
        outer_acc(&mut dw, 3, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(dw, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert_eq!(l2_distance(&[0.0f64, 0.0], &[3.0, 4.0]), 5.0);
    }
}
