use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (i, tensor) in store.tensors_mut().iter_mut().enumerate() {
            let g = grads.by_index(i);
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for k in 0..tensor.data.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                tensor.data[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use rand::SeedableRng;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamStore::new();
        let id = ps.add("w", &[3], Init::Zeros, &mut rng);
        let mut g = Grads::zeros_like(&ps);
        g.get_mut(id).copy_from_slice(&[2.0, -0.5, 0.0]);
        let mut adam = Adam::new(&ps, AdamConfig::default());
        adam.step(&mut ps, &g, 0.1);
        let w = ps.get(id);
        assert!((w[0] + 0.1).abs() < 1e-6);
        assert!((w[1] - 0.1).abs() < 1e-6);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamStore::new();
        let id = ps.add("w", &[2], Init::Ones, &mut rng);
        let mut adam = Adam::new(&ps, AdamConfig::default());
        for _ in 0..2000 {
            let mut g = Grads::zeros_like(&ps);
            let w = ps.get(id).to_vec();
            g.get_mut(id).copy_from_slice(&[2.0 * (w[0] - 3.0), 2.0 * (w[1] + 1.0)]);
            adam.step(&mut ps, &g, 0.05);
        }
        let w = ps.get(id);
        assert!((w[0] - 3.0).abs() < 1e-2 && (w[1] + 1.0).abs() < 1e-2);
    }
}
