use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction over a flat parameter buffer.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam {
            config,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = T::of(c.learning_rate);
        let wd = T::of(c.weight_decay);
        let eps = T::of(c.eps);
        let bc1 = T::one() - T::of(libm::pow(c.beta1, self.step as f64));
        let bc2 = T::one() - T::of(libm::pow(c.beta2, self.step as f64));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let update = m_hat / (v_hat.sqrt() + eps) + wd * params[i];
            params[i] -= lr * update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = vec![0.3f32, -1.7, 2.5e-3];
        let before = p.clone();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                weight_decay: 0.1,
                ..AdamConfig::default()
            },
            3,
        );
        for _ in 0..5 {
            adam.step(&mut p, &[1.0, -2.0, 0.5]);
        }
        assert_eq!(
            p.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            before.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0f64, 1.0];
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            },
            2,
        );
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![5.0f64];
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            },
            1,
        );
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 1.0)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
