use serde::{Deserialize, Serialize};

use crate::tinyssd::{DetectorParams, Layer, Real};

use super::discriminator::DiscriminatorParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam state for a list of flat tensors. Moments are kept in f64.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { cfg, step: 0, m, v }
    }

    pub fn for_detector<T: Real>(cfg: AdamConfig, params: &DetectorParams<T>) -> Self {
        Self::new(cfg, (0..params.num_tensors()).map(|i| params.tensor(i).len()))
    }

    pub fn for_discriminator<T: Real>(cfg: AdamConfig, d: &DiscriminatorParams<T>) -> Self {
        Self::new(cfg, [d.weights.len(), 1])
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update; `tensors[i]` is skipped entirely (left bit-identical)
    /// when `update[i]` is false.
    pub fn step<T: Real>(&mut self, tensors: &mut [&mut [T]], grads: &[&[T]], update: &[bool]) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in tensors.iter_mut().zip(grads).enumerate() {
            if !update[i] {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                let gk = g[k].as_f64();
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let delta = lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                p[k] = T::lit(p[k].as_f64() - delta);
            }
        }
    }

    /// Updates the tensors trainable under `freeze_after`.
    pub fn step_detector<T: Real>(&mut self, params: &mut DetectorParams<T>, grads: &DetectorParams<T>, freeze_after: Option<Layer>) {
        let update: Vec<bool> = (0..params.num_tensors()).map(|i| params.trainable(i, freeze_after)).collect();
        let g: Vec<&[T]> = (0..grads.num_tensors()).map(|i| grads.tensor(i)).collect();
        let mut p: Vec<&mut [T]> = params.tensors.iter_mut().map(|t| t.as_mut_slice()).collect();
        self.step(&mut p, &g, &update);
    }

    pub fn step_discriminator<T: Real>(&mut self, d: &mut DiscriminatorParams<T>, grads: &DiscriminatorParams<T>) {
        let gb = [grads.bias];
        let g: [&[T]; 2] = [&grads.weights, &gb];
        let mut bias = [d.bias];
        {
            let mut p: [&mut [T]; 2] = [&mut d.weights, &mut bias];
            self.step(&mut p, &g, &[true, true]);
        }
        d.bias = bias[0];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // With bias correction the first step is lr·g/(|g| + eps).
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.99, eps: 1e-8 };
        let mut adam = Adam::new(cfg, [3]);
        let mut x = vec![1.0f64, 1.0, 1.0];
        let g = vec![2.0f64, -0.5, 0.0];
        adam.step(&mut [&mut x], &[&g], &[true]);
        assert!((x[0] - 0.9).abs() < 1e-7 && (x[1] - 1.1).abs() < 1e-7 && x[2] == 1.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = AdamConfig { lr: 0.05, beta1: 0.9, beta2: 0.99, eps: 1e-8 };
        let mut adam = Adam::new(cfg, [2]);
        let mut x = vec![3.0f64, -2.0];
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut [&mut x], &[&g], &[true]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn skipped_tensor_is_untouched() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.99, eps: 1e-8 };
        let mut adam = Adam::new(cfg, [1, 1]);
        let (mut a, mut b) = (vec![1.0f32], vec![1.0f32]);
        adam.step(&mut [&mut a, &mut b], &[&[1.0], &[1.0]], &[true, false]);
        assert_ne!(a[0], 1.0);
        assert_eq!(b[0].to_bits(), 1.0f32.to_bits());
    }
}
