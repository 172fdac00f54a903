//! Minimal dense tensor with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable `N x C x H x W` array over a [`Scalar`]; the
//! payload is shared behind an `Arc`, so clones are cheap and tensors move
//! freely between threads. Differentiable computation happens through
//! [`Var`]s recorded on a single-use [`Tape`].

mod kernels;
mod optim;
mod tape;

pub use optim::{kaiming_normal, Adam, AdamParams};
pub use tape::{Gradients, Tape, Var};

use std::sync::Arc;

use crate::scalar::Scalar;

/// `[batch, channels, height, width]`.
pub type Shape = [usize; 4];

#[derive(thiserror::Error, Debug)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },
    #[error("{op}: expected {expected} channels, got {got}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },
    #[error("{op}: output would be empty for input {shape:?}")]
    EmptyOutput { op: &'static str, shape: Shape },
    #[error("{op}: channel range {start}..{end} out of 0..{channels}")]
    BadChannelRange {
        op: &'static str,
        start: usize,
        end: usize,
        channels: usize,
    },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
}

/// Dense 4-D array with shared, immutable storage.
#[derive(Clone)]
pub struct Tensor<T> {
    shape: Shape,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![value; numel]),
        }
    }

    /// Scalar tensor of shape `[1, 1, 1, 1]`.
    pub fn scalar(value: T) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the payload; clones if the storage is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        let v: &mut Vec<T> = Arc::make_mut(&mut self.data);
        v.as_mut_slice()
    }

    /// Identity of the underlying allocation; used by the tape to recognise
    /// the same parameter tensor across ops within one forward pass.
    pub(crate) fn storage_id(&self) -> usize {
        Arc::as_ptr(&self.data) as *const u8 as usize
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, cs, hs, ws] = self.shape;
        self.data[((n * cs + c) * hs + y) * ws + x]
    }

    /// Value of a one-element tensor.
    ///
    /// Panics if the tensor is not scalar; callers check shape contracts
    /// before reducing to items.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: Arc::new(self.data.iter().map(|v| U::of_f64(v.as_f64())).collect()),
        }
    }

    /// Stacks single-sample tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>, TensorError> {
        assert!(!items.is_empty(), "stack of zero tensors");
        let [n0, c, h, w] = items[0].shape;
        let mut data = Vec::with_capacity(items.len() * items[0].numel());
        let mut n = 0;
        for it in items {
            if it.shape[1] != c || it.shape[2] != h || it.shape[3] != w {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    lhs: items[0].shape,
                    rhs: it.shape,
                });
            }
            data.extend_from_slice(it.data());
            n += it.shape[0];
        }
        let _ = n0;
        Tensor::new([n, c, h, w], data)
    }

    /// Extracts sample `n` as a batch-1 tensor.
    pub fn sample(&self, n: usize) -> Tensor<T> {
        let [nn, c, h, w] = self.shape;
        assert!(n < nn);
        let stride = c * h * w;
        Tensor {
            shape: [1, c, h, w],
            data: Arc::new(self.data[n * stride..(n + 1) * stride].to_vec()),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        }
        Ok(())
    }
}
