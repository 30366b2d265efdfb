//! A small from-scratch CNN engine: the 20-layer landmark regressor, its
//! reverse-mode gradients, Adam, and the training/evaluation loops.
//!
//! Activations are batch-major and channels-last (`N×H×W×C`). Convolutions
//! are valid (no padding) with stride 1; pooling floors odd extents.

use alloc::vec::Vec;
use core::fmt;

mod layers;
mod model;
mod optim;
mod train;

pub use layers::{Activation, LayerSpec};
pub use model::{
    build_canonical_model, canonical_specs, reduced_specs, ForwardPass, Gradients, LayerSummary,
    Model, ParamCount, CANONICAL_INPUT, REDUCED_INPUT,
};
pub use optim::Adam;
pub use train::{
    evaluate, evaluate_predictions, image_to_input, landmarks_to_target, loss_mse,
    output_to_landmarks, predict_landmarks, refresh_batch_norm, train, EpochRecord, Evaluation,
    Examples, SampleExamples, TensorExamples, TrainConfig, TrainHistory,
};

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel count for normalization: `c` for spatial maps, the feature
    /// count for flat vectors.
    pub fn channels(&self) -> usize {
        match *self {
            Shape::Spatial { c, .. } => c,
            Shape::Flat(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { h, w, c } => write!(f, "({h}, {w}, {c})"),
            Shape::Flat(n) => write!(f, "({n})"),
        }
    }
}

/// A batch of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub batch: usize,
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(batch: usize, shape: Shape) -> Self {
        Self {
            batch,
            shape,
            data: alloc::vec![0.0; batch * shape.len()],
        }
    }

    pub fn from_vec(batch: usize, shape: Shape, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != batch * shape.len() {
            return Err(crate::Error::LengthMismatch {
                expected: batch * shape.len(),
                got: data.len(),
            });
        }
        Ok(Self { batch, shape, data })
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[n * len..(n + 1) * len]
    }
}
