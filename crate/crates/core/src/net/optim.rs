use alloc::vec;
use alloc::vec::Vec;

use super::train::TrainConfig;

/// Adam with bias-corrected moments and optional inverse-time decay of the
/// learning rate, `lr / (1 + decay · iterations)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    decay: f64,
    iterations: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            decay: config.decay,
            iterations: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        let lr = self.learning_rate / (1.0 + self.decay * self.iterations as f64);
        self.iterations += 1;
        let t = self.iterations as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_on_scalar_quadratic() {
        // f(x) = x², x0 = 1, so g = 2. After one step m̂ = g and v̂ = g², so
        // x1 = x0 − lr · g / (|g| + ε).
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&cfg);
        let mut x = vec![1.0];
        adam.step(&mut [&mut x], &[vec![2.0]]);
        assert!((x[0] - (1.0 - 0.001 * 2.0 / (2.0 + 1e-7))).abs() < 1e-15);

        // Second step by hand: g = 2·x1.
        let x1 = x[0];
        let g2 = 2.0 * x1;
        let m = 0.9 * 0.2 + 0.1 * g2;
        let v = 0.999 * 0.004 + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64 * 0.999);
        let want = x1 - 0.001 * m_hat / (v_hat.sqrt() + 1e-7);
        adam.step(&mut [&mut x], &[vec![g2]]);
        assert!((x[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut adam = Adam::new(&cfg);
        let mut p = vec![0.5, -2.0];
        adam.step(&mut [&mut p], &[vec![3.0, -1.0]]);
        assert_eq!(p, [0.5, -2.0]);
    }

    #[test]
    fn decay_shrinks_later_steps() {
        let cfg = TrainConfig {
            decay: 1.0,
            ..Default::default()
        };
        let mut adam = Adam::new(&cfg);
        let mut p = vec![0.0];
        adam.step(&mut [&mut p], &[vec![1.0]]);
        let first = -p[0];
        let before = p[0];
        adam.step(&mut [&mut p], &[vec![1.0]]);
        let second = before - p[0];
        assert!((second - first / 2.0).abs() < 1e-9);
    }
}
