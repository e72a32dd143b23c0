//! Dense numeric core: rank-1/2/3 arrays of `f32`, the forward operations the
//! encoder needs, reverse-mode gradient propagation, and finite-difference
//! gradient verification.
//!
//! The hot path is `f32` throughout. The same kernels are also instantiated at
//! `f64` to provide a shadow evaluation path used only by gradient checks.

pub mod gradcheck;
pub mod graph;
pub mod kernels;

pub use graph::{Graph, ParamId, ParamStore, ValueId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, data has {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape extents must be positive, got {shape:?}")]
    EmptyExtent { shape: Vec<usize> },
    #[error("dimension mismatch in {op}: left {left:?}, right {right:?}")]
    DimMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("axis {axis} out of range for rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("{op} expects rank-{expected} input, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("label {label} out of range for vocabulary of {vocab} at position {position}")]
    LabelOutOfRange {
        label: u32,
        vocab: usize,
        position: usize,
    },
    #[error("zero vector passed to {op}")]
    ZeroVector { op: &'static str },
}

/// Dense row-major array of `f32` values.
///
/// `grad` is allocated iff `requires_grad` is set; parameters carry gradients,
/// intermediate values do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::EmptyExtent { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks this tensor as a trainable leaf and allocates its gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[f32]) {
        let g = self
            .grad
            .as_mut()
            .expect("accumulate_grad on tensor without gradient buffer");
        assert_eq!(g.len(), delta.len());
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        assert_eq!(self.rank(), 2, "row() expects a rank-2 tensor");
        let n = self.shape[1];
        &self.data[i * n..(i + 1) * n]
    }
}
