use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer};
use super::{Activation, LayerSpec, Shape, Tensor};
use crate::{Error, Result};

/// Input of the landmark network: a 224×224 RGB image.
pub const CANONICAL_INPUT: [usize; 3] = [224, 224, 3];

/// Input of the reduced desk-scale variant.
pub const REDUCED_INPUT: [usize; 3] = [32, 32, 3];

/// The 20-layer landmark regressor.
pub fn canonical_specs() -> Vec<LayerSpec> {
    use Activation::*;
    use LayerSpec::*;
    alloc::vec![
        Conv2d {
            filters: 16,
            kernel: 3,
            activation: Relu
        },
        Conv2d {
            filters: 32,
            kernel: 3,
            activation: Relu
        },
        MaxPool2d { pool: 2 },
        Conv2d {
            filters: 64,
            kernel: 3,
            activation: Relu
        },
        MaxPool2d { pool: 2 },
        Conv2d {
            filters: 128,
            kernel: 3,
            activation: Relu
        },
        BatchNorm,
        MaxPool2d { pool: 2 },
        Dropout { rate: 0.3 },
        Conv2d {
            filters: 256,
            kernel: 5,
            activation: Relu
        },
        MaxPool2d { pool: 2 },
        Conv2d {
            filters: 512,
            kernel: 5,
            activation: Relu
        },
        BatchNorm,
        MaxPool2d { pool: 2 },
        Dropout { rate: 0.5 },
        Flatten,
        Dense {
            units: 1024,
            activation: Relu
        },
        BatchNorm,
        Dropout { rate: 0.7 },
        Dense {
            units: 110,
            activation: Linear
        },
    ]
}

/// A scaled-down network with the same layer kinds and the same 110-wide
/// output, for desk-scale training on [`REDUCED_INPUT`] images.
pub fn reduced_specs() -> Vec<LayerSpec> {
    use Activation::*;
    use LayerSpec::*;
    alloc::vec![
        Conv2d {
            filters: 8,
            kernel: 3,
            activation: Relu
        },
        MaxPool2d { pool: 2 },
        Conv2d {
            filters: 16,
            kernel: 3,
            activation: Relu
        },
        BatchNorm,
        MaxPool2d { pool: 2 },
        Flatten,
        Dense {
            units: 128,
            activation: Relu
        },
        Dense {
            units: 110,
            activation: Linear
        },
    ]
}

pub fn build_canonical_model(seed: u64) -> Model {
    Model::build(CANONICAL_INPUT, &canonical_specs(), seed)
        .expect("canonical architecture is consistent")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Shape,
    pub params: usize,
}

/// Trainable-parameter gradients, aligned with [`Model::trainable`].
pub type Gradients = Vec<Vec<f64>>;

/// Output of a training-mode forward pass with everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    caches: Vec<Cache>,
    pub output: Tensor,
}

/// A sequential network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input: Shape,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    names: Vec<String>,
}

impl Model {
    /// Allocates every layer for `input` (height, width, channels) and
    /// initializes weights deterministically from `seed`.
    pub fn build(input: [usize; 3], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Shape::Spatial {
            h: input[0],
            w: input[1],
            c: input[2],
        };
        let mut shape = input;
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut names = Vec::with_capacity(specs.len());
        for spec in specs {
            let kind = spec.kind_name();
            let index = names
                .iter()
                .filter(|n: &&String| n.rsplit_once('_').map(|(k, _)| k) == Some(kind))
                .count()
                + 1;
            let name = format!("{kind}_{index}");
            let (layer, out) = Layer::build(spec, shape, &name, &mut rng)?;
            layers.push(layer);
            shapes.push(out);
            names.push(name);
            shape = out;
        }
        Ok(Self {
            input,
            specs: specs.to_vec(),
            layers,
            shapes,
            names,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes.last().copied().unwrap_or(self.input)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        self.layers
            .iter()
            .zip(&self.shapes)
            .zip(&self.names)
            .map(|((layer, &output_shape), name)| LayerSummary {
                name: name.clone(),
                output_shape,
                params: layer.state().iter().map(|t| t.len()).sum(),
            })
            .collect()
    }

    pub fn param_count(&self) -> ParamCount {
        let trainable = self.trainable().iter().map(|t| t.len()).sum();
        let non_trainable = self.layers.iter().map(Layer::non_trainable_count).sum();
        ParamCount {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }

    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(Layer::trainable).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(Layer::trainable_mut)
            .collect()
    }

    /// Every stored tensor, layer by layer, including batch-norm running
    /// statistics. This is what a model file holds.
    pub fn state(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(Layer::state).collect()
    }

    /// Replaces every stored tensor; lengths must match [`Model::state`].
    pub fn load_state(&mut self, tensors: Vec<Vec<f64>>) -> Result<()> {
        let mut slots: Vec<&mut Vec<f64>> =
            self.layers.iter_mut().flat_map(Layer::state_mut).collect();
        if slots.len() != tensors.len() {
            return Err(Error::LengthMismatch {
                expected: slots.len(),
                got: tensors.len(),
            });
        }
        if let Some((slot, t)) = slots.iter().zip(&tensors).find(|(s, t)| s.len() != t.len()) {
            return Err(Error::LengthMismatch {
                expected: slot.len(),
                got: t.len(),
            });
        }
        for (slot, t) in slots.iter_mut().zip(tensors) {
            **slot = t;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape != self.input || x.data.len() != x.batch * x.shape.len() {
            return Err(Error::Shape {
                layer: "input".into(),
                detail: format!(
                    "expected {} per sample, got {} with {} values",
                    self.input,
                    x.shape,
                    x.data.len()
                ),
            });
        }
        Ok(())
    }

    /// Inference forward pass.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (layer, &shape) in self.layers.iter().zip(&self.shapes) {
            cur = layer.infer(&cur, shape);
        }
        Ok(cur)
    }

    /// Inference forward pass recording every layer's output shape.
    pub fn trace(&self, x: &Tensor) -> Result<Vec<(String, Shape)>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for ((layer, &shape), name) in self.layers.iter().zip(&self.shapes).zip(&self.names) {
            cur = layer.infer(&cur, shape);
            if cur.shape != shape || cur.data.len() != cur.batch * shape.len() {
                return Err(Error::Shape {
                    layer: name.clone(),
                    detail: format!("produced {} instead of {shape}", cur.shape),
                });
            }
            out.push((name.clone(), cur.shape));
        }
        Ok(out)
    }

    /// Training forward pass: dropout active, batch norm on batch
    /// statistics (running statistics are updated).
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, &shape) in self.layers.iter_mut().zip(&self.shapes) {
            let (y, cache) = layer.forward_train(cur, shape, rng);
            caches.push(cache);
            cur = y;
        }
        Ok(ForwardPass {
            caches,
            output: cur,
        })
    }

    /// One batch of a post-training pass that replaces the batch-norm
    /// running statistics with the average of per-batch statistics over the
    /// batches fed so far. `batches_seen` counts from 1.
    pub fn refresh_batch_norm(&mut self, x: &Tensor, batches_seen: usize) -> Result<()> {
        self.check_input(x)?;
        if batches_seen == 0 {
            return Err(Error::InvalidArgument("batch counter starts at 1".into()));
        }
        let mut cur = x.clone();
        for (layer, &shape) in self.layers.iter_mut().zip(&self.shapes) {
            cur = layer.refresh_forward(&cur, shape, batches_seen);
        }
        Ok(())
    }

    /// Back-propagates `grad_output` (dLoss/dOutput) through the pass.
    pub fn backward(&self, pass: &ForwardPass, grad_output: Tensor) -> Gradients {
        let mut grads: Gradients = self
            .trainable()
            .iter()
            .map(|t| alloc::vec![0.0; t.len()])
            .collect();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            offsets.push(offset);
            offset += layer.trainable().len();
        }
        let mut dy = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.trainable().len();
            let slot = &mut grads[offsets[i]..offsets[i] + n];
            match layer.backward(&pass.caches[i], dy, slot, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        grads
    }
}
