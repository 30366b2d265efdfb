use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Adam, Model, Shape, Tensor};
use crate::anthro::{LandmarkSet, FRAME_SIZE};
use crate::dataset::Sample;
use crate::raster::Raster;
use crate::{Error, Result};

/// Optimizer and schedule. Defaults are the published training recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    /// After the last epoch, re-estimate batch-norm running statistics
    /// from the training data with the final weights.
    pub refresh_batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            decay: 0.0,
            epochs: 300,
            batch_size: 64,
            shuffle: true,
            seed: 0,
            refresh_batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training MSE over the epoch's batches, weighted by batch size.
    pub loss: f64,
    /// Mean landmark error in pixels on the training batches.
    pub radial_error_px: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Indexed supervised examples, materialized one at a time so large corpora
/// never have to sit in memory as f64 tensors.
pub trait Examples {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes example `i`'s input into `out` (length = model input size).
    fn input(&self, i: usize, out: &mut [f64]) -> Result<()>;

    /// Writes example `i`'s regression target into `out`.
    fn target(&self, i: usize, out: &mut [f64]) -> Result<()>;
}

/// Examples held as plain vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorExamples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Examples for TensorExamples {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn input(&self, i: usize, out: &mut [f64]) -> Result<()> {
        copy_checked(&self.inputs[i], out)
    }

    fn target(&self, i: usize, out: &mut [f64]) -> Result<()> {
        copy_checked(&self.targets[i], out)
    }
}

fn copy_checked(src: &[f64], out: &mut [f64]) -> Result<()> {
    if src.len() != out.len() {
        return Err(Error::LengthMismatch {
            expected: out.len(),
            got: src.len(),
        });
    }
    out.copy_from_slice(src);
    Ok(())
}

/// Corpus samples fed to a network with the given input shape. Images are
/// box-downsampled when the network is smaller than 224×224; targets are
/// always in the 224 frame, divided by 224.
#[derive(Debug, Clone, Copy)]
pub struct SampleExamples<'a> {
    pub samples: &'a [Sample],
    pub input_shape: Shape,
}

impl Examples for SampleExamples<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn input(&self, i: usize, out: &mut [f64]) -> Result<()> {
        copy_checked(
            &image_to_input(self.samples[i].image(), self.input_shape)?,
            out,
        )
    }

    fn target(&self, i: usize, out: &mut [f64]) -> Result<()> {
        copy_checked(&landmarks_to_target(self.samples[i].landmarks())?, out)
    }
}

/// Normalizes an image to [0, 1] channels-last input of `shape`.
pub fn image_to_input(image: &Raster, shape: Shape) -> Result<Vec<f64>> {
    let Shape::Spatial { h, w, c: 3 } = shape else {
        return Err(Error::Shape {
            layer: "input".into(),
            detail: alloc::format!("network input {shape} is not an RGB map"),
        });
    };
    let resized;
    let img = if (image.width() as usize, image.height() as usize) == (w, h) {
        image
    } else {
        resized = image.area_downsample(w as u32, h as u32);
        &resized
    };
    Ok(img.as_bytes().iter().map(|&b| b as f64 / 255.0).collect())
}

/// Interleaved coordinates divided by 224.
pub fn landmarks_to_target(set: &LandmarkSet) -> Result<Vec<f64>> {
    if !set.is_complete() {
        return Err(Error::WrongLandmarkCount(set.len()));
    }
    Ok(set
        .to_interleaved()
        .into_iter()
        .map(|v| v / FRAME_SIZE as f64)
        .collect())
}

/// Multiplies a 110-vector by 224 and reads it as `(x_i, y_i)` pairs.
pub fn output_to_landmarks(output: &[f64]) -> Result<LandmarkSet> {
    let coords: Vec<f64> = output.iter().map(|v| v * FRAME_SIZE as f64).collect();
    LandmarkSet::from_interleaved(&coords, (FRAME_SIZE, FRAME_SIZE))
}

pub fn predict_landmarks(model: &Model, image: &Raster) -> Result<LandmarkSet> {
    if (image.width(), image.height()) != (FRAME_SIZE, FRAME_SIZE) {
        return Err(Error::SizeMismatch {
            expected_w: FRAME_SIZE,
            expected_h: FRAME_SIZE,
            width: image.width(),
            height: image.height(),
        });
    }
    let shape = model.input_shape();
    let x = Tensor::from_vec(1, shape, image_to_input(image, shape)?)?;
    output_to_landmarks(&model.infer(&x)?.data)
}

pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Sum of per-landmark pixel errors and count within `pck_px`, for
/// normalized interleaved vectors.
fn radial_errors(pred: &[f64], target: &[f64], pck_px: f64) -> (f64, usize, usize) {
    let scale = FRAME_SIZE as f64;
    let mut sum = 0.0;
    let mut within = 0;
    let mut n = 0;
    for (p, t) in pred.chunks_exact(2).zip(target.chunks_exact(2)) {
        let dx = (p[0] - t[0]) * scale;
        let dy = (p[1] - t[1]) * scale;
        let e = libm::sqrt(dx * dx + dy * dy);
        sum += e;
        if e <= pck_px {
            within += 1;
        }
        n += 1;
    }
    (sum, within, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// MSE on normalized coordinates.
    pub loss: f64,
    /// Mean Euclidean landmark error in pixels of the 224 frame.
    pub mean_radial_error_px: f64,
    /// Fraction of landmarks within `pck_threshold_px`.
    pub pck: f64,
    pub pck_threshold_px: f64,
}

/// Metrics over already computed normalized predictions.
pub fn evaluate_predictions(
    preds: &[Vec<f64>],
    targets: &[Vec<f64>],
    pck_px: f64,
) -> Result<Evaluation> {
    if preds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    let (mut sq, mut count) = (0.0, 0usize);
    let (mut err, mut within, mut landmarks) = (0.0, 0usize, 0usize);
    for (p, t) in preds.iter().zip(targets) {
        sq += loss_mse(p, t)? * p.len() as f64;
        count += p.len();
        let (e, w, n) = radial_errors(p, t, pck_px);
        err += e;
        within += w;
        landmarks += n;
    }
    Ok(Evaluation {
        loss: sq / count as f64,
        mean_radial_error_px: err / landmarks as f64,
        pck: within as f64 / landmarks as f64,
        pck_threshold_px: pck_px,
    })
}

/// Inference-mode metrics over `data`.
pub fn evaluate(model: &Model, data: &dyn Examples, pck_px: f64) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let in_len = model.input_shape().len();
    let out_len = model.output_shape().len();
    let mut preds = Vec::with_capacity(data.len());
    let mut targets = Vec::with_capacity(data.len());
    let mut x = vec![0.0; in_len];
    for i in 0..data.len() {
        data.input(i, &mut x)?;
        let y = model.infer(&Tensor::from_vec(1, model.input_shape(), x.clone())?)?;
        preds.push(y.data);
        let mut t = vec![0.0; out_len];
        data.target(i, &mut t)?;
        targets.push(t);
    }
    evaluate_predictions(&preds, &targets, pck_px)
}

/// Mini-batch Adam on MSE. `on_epoch` sees each finished epoch.
///
/// On a non-finite loss the model is restored to its state at the start of
/// the failing epoch and [`Error::Divergence`] is returned.
pub fn train(
    model: &mut Model,
    data: &dyn Examples,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let in_shape = model.input_shape();
    let out_len = model.output_shape().len();
    if out_len == 0 {
        return Err(Error::InvalidArgument("model has no outputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let checkpoint = model.clone();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut err_sum, mut landmarks) = (0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let n = batch.len();
            let mut x = vec![0.0; n * in_shape.len()];
            let mut t = vec![0.0; n * out_len];
            for (k, &i) in batch.iter().enumerate() {
                data.input(i, &mut x[k * in_shape.len()..(k + 1) * in_shape.len()])?;
                data.target(i, &mut t[k * out_len..(k + 1) * out_len])?;
            }
            let pass = model.forward_train(&Tensor::from_vec(n, in_shape, x)?, &mut rng)?;
            let pred = &pass.output.data;
            let loss = loss_mse(pred, &t)?;
            if !loss.is_finite() {
                *model = checkpoint;
                return Err(Error::Divergence { epoch });
            }
            let scale = 2.0 / pred.len() as f64;
            let grad = pred.iter().zip(&t).map(|(p, q)| scale * (p - q)).collect();
            let grads = model.backward(&pass, Tensor::from_vec(n, pass.output.shape, grad)?);
            let (e, _, l) = radial_errors(pred, &t, 0.0);
            loss_sum += loss * n as f64;
            err_sum += e;
            landmarks += l;
            adam.step(&mut model.trainable_mut(), &grads);
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            radial_error_px: if landmarks > 0 {
                err_sum / landmarks as f64
            } else {
                0.0
            },
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    if config.refresh_batch_norm && config.epochs > 0 {
        refresh_batch_norm(model, data, config.batch_size)?;
    }
    Ok(history)
}

/// Recomputes batch-norm running statistics over `data` in fixed order.
pub fn refresh_batch_norm(model: &mut Model, data: &dyn Examples, batch_size: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let shape = model.input_shape();
    let order: Vec<usize> = (0..data.len()).collect();
    for (b, batch) in order.chunks(batch_size.max(1)).enumerate() {
        let mut x = vec![0.0; batch.len() * shape.len()];
        for (k, &i) in batch.iter().enumerate() {
            data.input(i, &mut x[k * shape.len()..(k + 1) * shape.len()])?;
        }
        model.refresh_batch_norm(&Tensor::from_vec(batch.len(), shape, x)?, b + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{reduced_specs, Activation, LayerSpec, REDUCED_INPUT};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn mse_values() {
        let t = [0.3, 0.5, 0.9];
        assert_eq!(loss_mse(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((loss_mse(&p, &t).unwrap() - 0.01).abs() < 1e-15);
        assert!(loss_mse(&t, &t[..2]).is_err());

        let mut s = 3;
        let a: Vec<f64> = (0..110).map(|_| lcg(&mut s)).collect();
        let b: Vec<f64> = (0..110).map(|_| lcg(&mut s)).collect();
        // Two-pass oracle: differences first, then squares and mean.
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mut acc = 0.0;
        for d in &diffs {
            acc += d * d;
        }
        assert!((loss_mse(&a, &b).unwrap() - acc / 110.0).abs() < 1e-15);
    }

    #[test]
    fn metric_cases() {
        let t: Vec<f64> = (0..110).map(|i| (i as f64 * 1.7 % 200.0) / 224.0).collect();
        let e = evaluate_predictions(core::slice::from_ref(&t), core::slice::from_ref(&t), 10.0)
            .unwrap();
        assert_eq!((e.loss, e.mean_radial_error_px, e.pck), (0.0, 0.0, 1.0));

        let shifted: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, v)| if i % 2 == 0 { v + 5.0 / 224.0 } else { *v })
            .collect();
        let e = evaluate_predictions(&[shifted], &[t], 10.0).unwrap();
        assert!((e.mean_radial_error_px - 5.0).abs() < 1e-9);
        assert_eq!(e.pck, 1.0);
        assert_eq!(
            evaluate_predictions(&[], &[], 10.0),
            Err(Error::EmptyCorpus)
        );
    }

    #[test]
    fn metrics_match_independent_loop() {
        let mut s = 11;
        let preds: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..110).map(|_| lcg(&mut s)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..110).map(|_| lcg(&mut s)).collect())
            .collect();
        let e = evaluate_predictions(&preds, &targets, 60.0).unwrap();
        let (mut sq, mut errs) = (0.0, Vec::new());
        for (p, t) in preds.iter().zip(&targets) {
            for k in 0..55 {
                let dx = 224.0 * p[2 * k] - 224.0 * t[2 * k];
                let dy = 224.0 * p[2 * k + 1] - 224.0 * t[2 * k + 1];
                sq += (p[2 * k] - t[2 * k]).powi(2) + (p[2 * k + 1] - t[2 * k + 1]).powi(2);
                errs.push((dx * dx + dy * dy).sqrt());
            }
        }
        assert!((e.loss - sq / 440.0).abs() < 1e-14);
        assert!((e.mean_radial_error_px - errs.iter().sum::<f64>() / 220.0).abs() < 1e-9);
        assert_eq!(
            e.pck,
            errs.iter().filter(|&&v| v <= 60.0).count() as f64 / 220.0
        );
    }

    #[test]
    fn denormalization_and_packing() {
        let set = output_to_landmarks(&[0.5; 110]).unwrap();
        assert!(set.points().iter().all(|p| p.x == 112.0 && p.y == 112.0));
        let v: Vec<f64> = (0..110).map(|i| i as f64 / 128.0).collect();
        let back = landmarks_to_target(&output_to_landmarks(&v).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn toy_data(n: usize) -> TensorExamples {
        let mut s = 5;
        let len = REDUCED_INPUT.iter().product::<usize>();
        TensorExamples {
            inputs: (0..n)
                .map(|_| (0..len).map(|_| lcg(&mut s)).collect())
                .collect(),
            targets: (0..n)
                .map(|_| (0..110).map(|_| 0.2 + 0.6 * lcg(&mut s)).collect())
                .collect(),
        }
    }

    #[test]
    fn zero_learning_rate_keeps_trainable_parameters() {
        let mut m = Model::build(REDUCED_INPUT, &reduced_specs(), 3).unwrap();
        let before: Vec<Vec<f64>> = m.trainable().into_iter().cloned().collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            ..Default::default()
        };
        let h = train(&mut m, &toy_data(1), &cfg, |_| {}).unwrap();
        assert_eq!(h.epochs.len(), 1);
        let after: Vec<Vec<f64>> = m.trainable().into_iter().cloned().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn divergence_restores_checkpoint() {
        let mut m = Model::build(
            [2, 2, 3],
            &[
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Linear,
                },
            ],
            0,
        )
        .unwrap();
        let before = m.clone();
        let data = TensorExamples {
            inputs: vec![vec![f64::INFINITY; 12]],
            targets: vec![vec![0.0; 2]],
        };
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(
            train(&mut m, &data, &cfg, |_| {}),
            Err(Error::Divergence { epoch: 1 })
        );
        assert_eq!(m, before);
    }

    #[test]
    fn empty_data_is_rejected() {
        let mut m = Model::build(REDUCED_INPUT, &reduced_specs(), 3).unwrap();
        assert_eq!(
            train(
                &mut m,
                &TensorExamples::default(),
                &TrainConfig::default(),
                |_| {}
            ),
            Err(Error::EmptyCorpus)
        );
        assert!(matches!(
            evaluate(&m, &TensorExamples::default(), 10.0),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let run = || {
            let mut m = Model::build(REDUCED_INPUT, &reduced_specs(), 9).unwrap();
            let h = train(&mut m, &toy_data(4), &cfg, |_| {}).unwrap();
            (m, h)
        };
        assert_eq!(run(), run());
    }
}
