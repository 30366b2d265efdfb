use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Shape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool2d {
        pool: usize,
    },
    BatchNorm,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "max_pooling2d",
            LayerSpec::BatchNorm => "batch_normalization",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

pub(crate) const BN_MOMENTUM: f64 = 0.99;
pub(crate) const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv2d {
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
    pub activation: Activation,
    /// `[kernel, kernel, cin, cout]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub fin: usize,
    pub units: usize,
    pub activation: Activation,
    /// `[fin, units]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Conv2d(Conv2d),
    MaxPool2d { pool: usize },
    BatchNorm(BatchNorm),
    Dropout { rate: f64 },
    Flatten,
    Dense(Dense),
}

/// What a training forward pass keeps for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv {
        input: Tensor,
        output: Tensor,
    },
    Pool {
        input_shape: Shape,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        mask: Vec<f64>,
    },
    Flatten {
        input_shape: Shape,
    },
    Dense {
        input: Tensor,
        output: Tensor,
    },
}

fn shape_err(layer: &str, detail: String) -> Error {
    Error::Shape {
        layer: layer.into(),
        detail,
    }
}

/// He-style uniform limit `sqrt(6 / fan_in)`.
fn fan_in_uniform(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let limit = libm::sqrt(6.0 / fan_in as f64);
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

impl Layer {
    /// Allocates and initializes a layer for `input`, returning its output
    /// shape.
    pub fn build(
        spec: &LayerSpec,
        input: Shape,
        name: &str,
        rng: &mut impl Rng,
    ) -> Result<(Layer, Shape)> {
        match *spec {
            LayerSpec::Conv2d {
                filters,
                kernel,
                activation,
            } => {
                let Shape::Spatial { h, w, c } = input else {
                    return Err(shape_err(
                        name,
                        format!("expects a spatial input, got {input}"),
                    ));
                };
                if kernel == 0 || kernel > h || kernel > w || filters == 0 {
                    return Err(shape_err(
                        name,
                        format!("kernel {kernel} does not fit input {input}"),
                    ));
                }
                let fan_in = kernel * kernel * c;
                let layer = Conv2d {
                    kernel,
                    cin: c,
                    cout: filters,
                    activation,
                    weight: fan_in_uniform(rng, fan_in, fan_in * filters),
                    bias: vec![0.0; filters],
                };
                let out = Shape::Spatial {
                    h: h - kernel + 1,
                    w: w - kernel + 1,
                    c: filters,
                };
                Ok((Layer::Conv2d(layer), out))
            }
            LayerSpec::MaxPool2d { pool } => {
                let Shape::Spatial { h, w, c } = input else {
                    return Err(shape_err(
                        name,
                        format!("expects a spatial input, got {input}"),
                    ));
                };
                if pool == 0 || h / pool == 0 || w / pool == 0 {
                    return Err(shape_err(
                        name,
                        format!("pool {pool} does not fit input {input}"),
                    ));
                }
                Ok((
                    Layer::MaxPool2d { pool },
                    Shape::Spatial {
                        h: h / pool,
                        w: w / pool,
                        c,
                    },
                ))
            }
            LayerSpec::BatchNorm => {
                let c = input.channels();
                Ok((
                    Layer::BatchNorm(BatchNorm {
                        gamma: vec![1.0; c],
                        beta: vec![0.0; c],
                        running_mean: vec![0.0; c],
                        running_var: vec![1.0; c],
                    }),
                    input,
                ))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidArgument(format!(
                        "{name}: dropout rate {rate} outside [0, 1)"
                    )));
                }
                Ok((Layer::Dropout { rate }, input))
            }
            LayerSpec::Flatten => Ok((Layer::Flatten, Shape::Flat(input.len()))),
            LayerSpec::Dense { units, activation } => {
                let Shape::Flat(fin) = input else {
                    return Err(shape_err(
                        name,
                        format!("expects a flat input, got {input}"),
                    ));
                };
                if units == 0 {
                    return Err(shape_err(name, "zero units".into()));
                }
                let layer = Dense {
                    fin,
                    units,
                    activation,
                    weight: fan_in_uniform(rng, fin, fin * units),
                    bias: vec![0.0; units],
                };
                Ok((Layer::Dense(layer), Shape::Flat(units)))
            }
        }
    }

    /// Trainable tensors in a fixed order.
    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Every stored tensor, trainable first, then running statistics.
    pub fn state(&self) -> Vec<&Vec<f64>> {
        let mut out = self.trainable();
        if let Layer::BatchNorm(l) = self {
            out.push(&l.running_mean);
            out.push(&l.running_var);
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            _ => Vec::new(),
        }
    }

    pub fn non_trainable_count(&self) -> usize {
        match self {
            Layer::BatchNorm(l) => l.running_mean.len() + l.running_var.len(),
            _ => 0,
        }
    }

    /// Inference-mode forward: dropout is the identity and batch norm uses
    /// running statistics.
    pub fn infer(&self, x: &Tensor, out_shape: Shape) -> Tensor {
        match self {
            Layer::Conv2d(l) => l.forward(x, out_shape),
            Layer::Dense(l) => l.forward(x),
            Layer::MaxPool2d { pool } => max_pool(x, *pool, out_shape).0,
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Dropout { .. } => x.clone(),
            Layer::Flatten => Tensor {
                batch: x.batch,
                shape: out_shape,
                data: x.data.clone(),
            },
        }
    }

    /// Deterministic forward for re-estimating batch-norm statistics: batch
    /// norm behaves as in training, dropout as in inference. `batches_seen`
    /// is the 1-based index of the current batch.
    pub fn refresh_forward(&mut self, x: &Tensor, out_shape: Shape, batches_seen: usize) -> Tensor {
        match self {
            Layer::BatchNorm(l) => l.refresh(x, batches_seen),
            _ => self.infer(x, out_shape),
        }
    }

    /// Training-mode forward. Updates batch-norm running statistics.
    pub fn forward_train(
        &mut self,
        x: Tensor,
        out_shape: Shape,
        rng: &mut impl Rng,
    ) -> (Tensor, Cache) {
        match self {
            Layer::Conv2d(l) => {
                let y = l.forward(&x, out_shape);
                (
                    y.clone(),
                    Cache::Conv {
                        input: x,
                        output: y,
                    },
                )
            }
            Layer::Dense(l) => {
                let y = l.forward(&x);
                (
                    y.clone(),
                    Cache::Dense {
                        input: x,
                        output: y,
                    },
                )
            }
            Layer::MaxPool2d { pool } => {
                let (y, argmax) = max_pool(&x, *pool, out_shape);
                (
                    y,
                    Cache::Pool {
                        input_shape: x.shape,
                        argmax,
                    },
                )
            }
            Layer::BatchNorm(l) => l.forward_train(&x),
            Layer::Dropout { rate } => {
                let keep = 1.0 - *rate;
                let mask: Vec<f64> = x
                    .data
                    .iter()
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                (
                    Tensor {
                        batch: x.batch,
                        shape: x.shape,
                        data,
                    },
                    Cache::Dropout { mask },
                )
            }
            Layer::Flatten => {
                let input_shape = x.shape;
                (
                    Tensor {
                        batch: x.batch,
                        shape: out_shape,
                        data: x.data,
                    },
                    Cache::Flatten { input_shape },
                )
            }
        }
    }

    /// Backward pass. Accumulates parameter gradients into `grads` (same
    /// order as [`Layer::trainable`]) and returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &Cache,
        dy: Tensor,
        grads: &mut [Vec<f64>],
        need_input_grad: bool,
    ) -> Option<Tensor> {
        match (self, cache) {
            (Layer::Conv2d(l), Cache::Conv { input, output }) => {
                l.backward(input, output, dy, grads, need_input_grad)
            }
            (Layer::Dense(l), Cache::Dense { input, output }) => {
                l.backward(input, output, dy, grads, need_input_grad)
            }
            (
                Layer::MaxPool2d { .. },
                Cache::Pool {
                    input_shape,
                    argmax,
                },
            ) => {
                let mut dx = Tensor::zeros(dy.batch, *input_shape);
                for (g, &i) in dy.data.iter().zip(argmax) {
                    dx.data[i] += g;
                }
                Some(dx)
            }
            (Layer::BatchNorm(l), Cache::BatchNorm { x_hat, inv_std }) => {
                Some(l.backward(x_hat, inv_std, dy, grads))
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                let mut dx = dy;
                dx.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                Some(dx)
            }
            (Layer::Flatten, Cache::Flatten { input_shape }) => Some(Tensor {
                batch: dy.batch,
                shape: *input_shape,
                data: dy.data,
            }),
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

fn relu_in_place(data: &mut [f64]) {
    data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Multiplies `dy` by the activation derivative evaluated at the output.
fn activation_grad(activation: Activation, output: &Tensor, dy: &mut Tensor) {
    if activation == Activation::Relu {
        dy.data.iter_mut().zip(&output.data).for_each(|(g, &y)| {
            if y <= 0.0 {
                *g = 0.0
            }
        });
    }
}

impl Conv2d {
    fn forward(&self, x: &Tensor, out_shape: Shape) -> Tensor {
        let Shape::Spatial { h, w, c: cin } = x.shape else {
            unreachable!()
        };
        let Shape::Spatial {
            h: oh,
            w: ow,
            c: cout,
        } = out_shape
        else {
            unreachable!()
        };
        let k = self.kernel;
        let mut y = Tensor::zeros(x.batch, out_shape);
        for n in 0..x.batch {
            let xin = &x.data[n * h * w * cin..(n + 1) * h * w * cin];
            let yout = &mut y.data[n * oh * ow * cout..(n + 1) * oh * ow * cout];
            for oy in 0..oh {
                for ox in 0..ow {
                    let acc = &mut yout[(oy * ow + ox) * cout..][..cout];
                    acc.copy_from_slice(&self.bias);
                    for ky in 0..k {
                        for kx in 0..k {
                            let px = &xin[((oy + ky) * w + ox + kx) * cin..][..cin];
                            let wk = &self.weight[(ky * k + kx) * cin * cout..][..cin * cout];
                            for (ci, &v) in px.iter().enumerate() {
                                if v == 0.0 {
                                    continue;
                                }
                                let wrow = &wk[ci * cout..][..cout];
                                for (a, &wv) in acc.iter_mut().zip(wrow) {
                                    *a += v * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.activation == Activation::Relu {
            relu_in_place(&mut y.data);
        }
        y
    }

    fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        mut dy: Tensor,
        grads: &mut [Vec<f64>],
        need_dx: bool,
    ) -> Option<Tensor> {
        activation_grad(self.activation, y, &mut dy);
        let Shape::Spatial { h, w, c: cin } = x.shape else {
            unreachable!()
        };
        let Shape::Spatial {
            h: oh,
            w: ow,
            c: cout,
        } = y.shape
        else {
            unreachable!()
        };
        let k = self.kernel;
        let (dw, rest) = grads.split_at_mut(1);
        let (dw, db) = (&mut dw[0], &mut rest[0]);
        let mut dx = need_dx.then(|| Tensor::zeros(x.batch, x.shape));
        for n in 0..x.batch {
            let xin = &x.data[n * h * w * cin..(n + 1) * h * w * cin];
            let g = &dy.data[n * oh * ow * cout..(n + 1) * oh * ow * cout];
            for oy in 0..oh {
                for ox in 0..ow {
                    let gz = &g[(oy * ow + ox) * cout..][..cout];
                    if gz.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for (b, &gv) in db.iter_mut().zip(gz) {
                        *b += gv;
                    }
                    for ky in 0..k {
                        for kx in 0..k {
                            let base = ((oy + ky) * w + ox + kx) * cin;
                            let wk = (ky * k + kx) * cin * cout;
                            for ci in 0..cin {
                                let v = xin[base + ci];
                                let off = wk + ci * cout;
                                if v != 0.0 {
                                    for (d, &gv) in dw[off..off + cout].iter_mut().zip(gz) {
                                        *d += v * gv;
                                    }
                                }
                                if let Some(dx) = dx.as_mut() {
                                    let s: f64 = self.weight[off..off + cout]
                                        .iter()
                                        .zip(gz)
                                        .map(|(a, b)| a * b)
                                        .sum();
                                    dx.data[n * h * w * cin + base + ci] += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl Dense {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut y = Tensor::zeros(x.batch, Shape::Flat(self.units));
        for n in 0..x.batch {
            let row = &mut y.data[n * self.units..(n + 1) * self.units];
            row.copy_from_slice(&self.bias);
            for (f, &v) in x.sample(n).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let wrow = &self.weight[f * self.units..(f + 1) * self.units];
                for (a, &wv) in row.iter_mut().zip(wrow) {
                    *a += v * wv;
                }
            }
        }
        if self.activation == Activation::Relu {
            relu_in_place(&mut y.data);
        }
        y
    }

    fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        mut dy: Tensor,
        grads: &mut [Vec<f64>],
        need_dx: bool,
    ) -> Option<Tensor> {
        activation_grad(self.activation, y, &mut dy);
        let (dw, rest) = grads.split_at_mut(1);
        let (dw, db) = (&mut dw[0], &mut rest[0]);
        let mut dx = need_dx.then(|| Tensor::zeros(x.batch, x.shape));
        for n in 0..x.batch {
            let gz = &dy.data[n * self.units..(n + 1) * self.units];
            for (b, &gv) in db.iter_mut().zip(gz) {
                *b += gv;
            }
            for (f, &v) in x.sample(n).iter().enumerate() {
                let off = f * self.units;
                if v != 0.0 {
                    for (d, &gv) in dw[off..off + self.units].iter_mut().zip(gz) {
                        *d += v * gv;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    dx.data[n * self.fin + f] = self.weight[off..off + self.units]
                        .iter()
                        .zip(gz)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
        }
        dx
    }
}

impl BatchNorm {
    fn infer(&self, x: &Tensor) -> Tensor {
        let c = self.gamma.len();
        let scale: Vec<f64> = (0..c)
            .map(|j| self.gamma[j] / libm::sqrt(self.running_var[j] + BN_EPSILON))
            .collect();
        let data = x
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = i % c;
                (v - self.running_mean[j]) * scale[j] + self.beta[j]
            })
            .collect();
        Tensor {
            batch: x.batch,
            shape: x.shape,
            data,
        }
    }

    /// Per-channel biased mean and variance of a batch.
    fn batch_moments(&self, x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let c = self.gamma.len();
        let count = (x.data.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for (i, &v) in x.data.iter().enumerate() {
            mean[i % c] += v;
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for (i, &v) in x.data.iter().enumerate() {
            let d = v - mean[i % c];
            var[i % c] += d * d;
        }
        var.iter_mut().for_each(|v| *v /= count);
        (mean, var)
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], var: &[f64]) -> (Tensor, Vec<f64>, Vec<f64>) {
        let c = self.gamma.len();
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / libm::sqrt(v + BN_EPSILON))
            .collect();
        let x_hat: Vec<f64> = x
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c])
            .collect();
        let data = x_hat
            .iter()
            .enumerate()
            .map(|(i, &v)| self.gamma[i % c] * v + self.beta[i % c])
            .collect();
        (
            Tensor {
                batch: x.batch,
                shape: x.shape,
                data,
            },
            x_hat,
            inv_std,
        )
    }

    fn forward_train(&mut self, x: &Tensor) -> (Tensor, Cache) {
        let (mean, var) = self.batch_moments(x);
        let (y, x_hat, inv_std) = self.normalize(x, &mean, &var);
        for j in 0..mean.len() {
            self.running_mean[j] =
                BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
            self.running_var[j] = BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
        }
        (y, Cache::BatchNorm { x_hat, inv_std })
    }

    /// Normalizes with batch statistics and folds them into the running
    /// statistics as the equal-weight average over `batches_seen` batches.
    fn refresh(&mut self, x: &Tensor, batches_seen: usize) -> Tensor {
        let (mean, var) = self.batch_moments(x);
        let k = batches_seen as f64;
        for j in 0..mean.len() {
            self.running_mean[j] += (mean[j] - self.running_mean[j]) / k;
            self.running_var[j] += (var[j] - self.running_var[j]) / k;
        }
        self.normalize(x, &mean, &var).0
    }

    fn backward(
        &self,
        x_hat: &[f64],
        inv_std: &[f64],
        dy: Tensor,
        grads: &mut [Vec<f64>],
    ) -> Tensor {
        let c = self.gamma.len();
        let count = (dy.data.len() / c) as f64;
        let (dgamma, rest) = grads.split_at_mut(1);
        let (dgamma, dbeta) = (&mut dgamma[0], &mut rest[0]);
        let mut sum_dxh = vec![0.0; c];
        let mut sum_dxh_xh = vec![0.0; c];
        for (i, (&g, &xh)) in dy.data.iter().zip(x_hat).enumerate() {
            let j = i % c;
            dgamma[j] += g * xh;
            dbeta[j] += g;
            let dxh = g * self.gamma[j];
            sum_dxh[j] += dxh;
            sum_dxh_xh[j] += dxh * xh;
        }
        let data = dy
            .data
            .iter()
            .zip(x_hat)
            .enumerate()
            .map(|(i, (&g, &xh))| {
                let j = i % c;
                let dxh = g * self.gamma[j];
                inv_std[j] / count * (count * dxh - sum_dxh[j] - xh * sum_dxh_xh[j])
            })
            .collect();
        Tensor {
            batch: dy.batch,
            shape: dy.shape,
            data,
        }
    }
}

/// Max pooling with stride equal to the window; ties go to the first
/// element in scan order. Returns flat input indices of the maxima.
fn max_pool(x: &Tensor, pool: usize, out_shape: Shape) -> (Tensor, Vec<usize>) {
    let Shape::Spatial { h, w, c } = x.shape else {
        unreachable!()
    };
    let Shape::Spatial { h: oh, w: ow, .. } = out_shape else {
        unreachable!()
    };
    let mut y = Tensor::zeros(x.batch, out_shape);
    let mut argmax = vec![0usize; y.data.len()];
    for n in 0..x.batch {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for py in 0..pool {
                        for px in 0..pool {
                            let i = ((n * h + oy * pool + py) * w + ox * pool + px) * c + ch;
                            if x.data[i] > best || (py == 0 && px == 0) {
                                best = x.data[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = ((n * oh + oy) * ow + ox) * c + ch;
                    y.data[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    (y, argmax)
}
