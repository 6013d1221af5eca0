//! Dense `f64` tensors and a reverse-mode differentiation tape.
//!
//! Everything the model graph needs is built from the primitives in this
//! module: matrix products, elementwise maps, reductions, softmax variants,
//! a valid 1-d convolution, and an embedding lookup. Ops are recorded on a
//! [`Tape`]; [`Tape::backward`] replays the record once in reverse and
//! returns a gradient per trainable leaf.

use std::sync::Arc;

use thiserror::Error;

mod kernels;
mod tape;

pub mod gradcheck;

pub use tape::{Binding, GradientMap, ParamId, ParamStore, Tape, Var};

/// Errors produced by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("non-finite value produced by {op}")]
    NumericalError { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalarLoss { shape: Vec<usize> },
    #[error("conv1d filter width {width} exceeds input length {len}")]
    FilterTooWide { width: usize, len: usize },
    #[error("run_hops requires at least one hop")]
    NoHops,
    #[error("embedding index {index} out of vocabulary (size {size})")]
    IndexOutOfVocab { index: usize, size: usize },
}

fn shape_mismatch(op: &'static str, details: String) -> TensorError {
    TensorError::ShapeMismatch { op, details }
}

/// A dense row-major tensor of `f64` values.
///
/// Tensors are immutable values; cloning is cheap (the buffer is shared until
/// someone writes through [`Tensor::data_mut`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_mismatch(
                "new",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor { shape, data: Arc::new(data) })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![0.0; numel]) }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![value; numel]) }
    }

    /// A rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: Arc::new(vec![value]) }
    }

    /// A rank-1 tensor over a slice.
    pub fn vector(values: &[f64]) -> Self {
        Tensor { shape: vec![values.len()], data: Arc::new(values.to_vec()) }
    }

    /// A rank-2 tensor from nested rows; all rows must share a length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(shape_mismatch("matrix", "ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the buffer; unshares it if other clones exist.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// Value at a rank-2 position.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// The single value of a tensor with one element.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same buffer under a new shape with an equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(shape_mismatch(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape, shape),
            ));
        }
        Ok(Tensor { shape, data: Arc::clone(&self.data) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn scalar_is_rank_zero() {
        let s = Tensor::scalar(4.5);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item(), 4.5);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.reshaped(vec![3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(vec![4]).is_err());
    }

    #[test]
    fn data_mut_unshares() {
        let a = Tensor::vector(&[1.0, 2.0]);
        let mut b = a.clone();
        b.data_mut()[0] = 9.0;
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(b.data()[0], 9.0);
    }
}
