use std::time::Instant;

use earmatch_core::anthro::{Landmark, LandmarkSet};
use earmatch_core::dataset::Sample;
use earmatch_core::net::{
    evaluate, reduced_specs, train, Model, SampleExamples, TrainConfig, REDUCED_INPUT,
};
use earmatch_core::raster::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|s| {
            let mut img = Raster::new(224, 224);
            for y in 0..224 {
                for x in 0..224 {
                    img.put(x, y, [rng.random(), rng.random(), rng.random()]);
                }
            }
            let pts = (0..55u8)
                .map(|l| {
                    Landmark::new(
                        l,
                        rng.random_range(20.0..204.0),
                        rng.random_range(20.0..204.0),
                    )
                    .unwrap()
                })
                .collect();
            Sample::new(
                img,
                LandmarkSet::full(pts, (224, 224)).unwrap(),
                format!("s{s}"),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn reduced_network_memorizes_eight_samples() {
    let start = Instant::now();
    let data = samples(8, 1);
    let mut model = Model::build(REDUCED_INPUT, &reduced_specs(), 3).unwrap();
    let examples = SampleExamples {
        samples: &data,
        input_shape: model.input_shape(),
    };
    let config = TrainConfig {
        epochs: 400,
        batch_size: 8,
        ..Default::default()
    };
    let history = train(&mut model, &examples, &config, |_| {}).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|r| r.loss).collect();
    assert_eq!(losses.len(), 400);
    assert!(
        losses[10..].windows(2).all(|w| w[1] <= w[0]),
        "loss rose after warmup"
    );
    let last = *losses.last().unwrap();
    assert!(last < 1e-3, "final training loss {last:e}");

    // Refreshed batch-norm statistics make inference agree with training.
    let eval = evaluate(&model, &examples, 5.0).unwrap();
    assert!(eval.loss < 1e-3, "inference loss {:e}", eval.loss);
    assert!(start.elapsed().as_secs() < 600);
}

#[test]
fn without_refresh_running_statistics_lag() {
    let data = samples(2, 4);
    let mut model = Model::build(REDUCED_INPUT, &reduced_specs(), 3).unwrap();
    let examples = SampleExamples {
        samples: &data,
        input_shape: model.input_shape(),
    };
    let config = TrainConfig {
        epochs: 30,
        batch_size: 2,
        refresh_batch_norm: false,
        ..Default::default()
    };
    train(&mut model, &examples, &config, |_| {}).unwrap();
    let lagging = model.state();
    let mut refreshed = model.clone();
    earmatch_core::net::refresh_batch_norm(&mut refreshed, &examples, 2).unwrap();
    assert_ne!(lagging, refreshed.state());
    assert_eq!(model.trainable(), refreshed.trainable());
}
