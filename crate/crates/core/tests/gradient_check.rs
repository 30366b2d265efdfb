use earmatch_core::net::{Activation, LayerSpec, Model, Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-3;

fn small_net(seed: u64) -> Model {
    use Activation::*;
    use LayerSpec::*;
    Model::build(
        [7, 7, 2],
        &[
            Conv2d {
                filters: 3,
                kernel: 3,
                activation: Relu,
            },
            BatchNorm,
            MaxPool2d { pool: 2 },
            Flatten,
            Dense {
                units: 6,
                activation: Relu,
            },
            Dropout { rate: 0.3 },
            Dense {
                units: 4,
                activation: Linear,
            },
        ],
        seed,
    )
    .unwrap()
}

fn data(n: usize) -> (Tensor, Vec<f64>) {
    let mut s = 0x1234_5678u64;
    let mut next = || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let x: Vec<f64> = (0..n * 7 * 7 * 2).map(|_| next()).collect();
    let t: Vec<f64> = (0..n * 4).map(|_| next()).collect();
    (
        Tensor::from_vec(n, Shape::Spatial { h: 7, w: 7, c: 2 }, x).unwrap(),
        t,
    )
}

/// Training-mode loss with a fixed dropout mask (same RNG seed each call).
fn loss(model: &mut Model, x: &Tensor, t: &[f64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let out = model.forward_train(x, &mut rng).unwrap().output.data;
    out.iter()
        .zip(t)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / t.len() as f64
}

fn analytic(model: &mut Model, x: &Tensor, t: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pass = model.forward_train(x, &mut rng).unwrap();
    let scale = 2.0 / t.len() as f64;
    let g = pass
        .output
        .data
        .iter()
        .zip(t)
        .map(|(p, q)| scale * (p - q))
        .collect();
    let dy = Tensor::from_vec(pass.output.batch, pass.output.shape, g).unwrap();
    model.backward(&pass, dy)
}

#[test]
fn backprop_matches_central_differences() {
    let mut model = small_net(5);
    let (x, t) = data(4);
    let grads = analytic(&mut model, &x, &t);
    let mut worst = 0.0f64;
    for (k, tensor) in grads.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = model.trainable()[k][i];
            model.trainable_mut()[k][i] = orig + STEP;
            let up = loss(&mut model, &x, &t);
            model.trainable_mut()[k][i] = orig - STEP;
            let down = loss(&mut model, &x, &t);
            model.trainable_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    println!("worst relative error {worst:e}");
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}
