use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tinyssd::{DetectionOutput, Real};

/// Largest magnitude of the sigmoid input. Keeps `D(·)` strictly inside
/// (0, 1) so neither log term of the loss can reach infinity.
pub const PRE_ACTIVATION_CLAMP: f64 = 30.0;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One fully connected unit over a flattened [`DetectionOutput`] followed by
/// a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

/// Gradient container with the same layout as the parameters.
pub type DiscriminatorGrads<T> = DiscriminatorParams<T>;

impl<T: Real> DiscriminatorParams<T> {
    pub fn zeros(input_len: usize) -> Self {
        Self {
            weights: vec![T::zero(); input_len],
            bias: T::zero(),
        }
    }

    /// Weights and bias drawn from Normal(0, `std`).
    pub fn init(input_len: usize, std: f64, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0, std).expect("valid std");
        let weights = (0..input_len).map(|_| T::lit(normal.sample(&mut rng))).collect();
        Self {
            weights,
            bias: T::lit(normal.sample(&mut rng)),
        }
    }

    pub fn input_len(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, out: &DetectionOutput<T>) -> Result<()> {
        if out.flat_len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "discriminator expects {} inputs, detection output has {}",
                self.weights.len(),
                out.flat_len()
            )));
        }
        Ok(())
    }

    /// Unclamped pre-activation `w·y + b`, accumulated in f64.
    pub fn logit(&self, out: &DetectionOutput<T>) -> Result<f64> {
        self.check(out)?;
        let w = &self.weights;
        let n = out.class_logits.len();
        let mut z = self.bias.as_f64();
        for (i, v) in out.class_logits.iter().enumerate() {
            z += w[i].as_f64() * v.as_f64();
        }
        for (i, v) in out.box_offsets.iter().enumerate() {
            z += w[n + i].as_f64() * v.as_f64();
        }
        Ok(z)
    }

    /// Probability that `out` came from the baseline on clean data.
    pub fn forward(&self, out: &DetectionOutput<T>) -> Result<f64> {
        Ok(sigmoid(self.logit(out)?.clamp(-PRE_ACTIVATION_CLAMP, PRE_ACTIVATION_CLAMP)))
    }

    pub fn all_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|v| v.is_finite())
    }

    /// Adds `dL/dz · y` to the weight gradient and `dL/dz` to the bias.
    fn accumulate(&self, grads: &mut Self, out: &DetectionOutput<T>, dz: f64) {
        let n = out.class_logits.len();
        for (i, v) in out.class_logits.iter().enumerate() {
            grads.weights[i] += T::lit(dz * v.as_f64());
        }
        for (i, v) in out.box_offsets.iter().enumerate() {
            grads.weights[n + i] += T::lit(dz * v.as_f64());
        }
        grads.bias += T::lit(dz);
    }
}

/// Derivative of `-log σ(clamp(z))` (target 1) or `-log(1 - σ(clamp(z)))`
/// (target 0) with respect to `z`. Zero where the clamp is active.
fn bce_dz(z: f64, target_real: bool) -> f64 {
    if z.abs() >= PRE_ACTIVATION_CLAMP {
        return 0.0;
    }
    let p = sigmoid(z);
    if target_real {
        p - 1.0
    } else {
        p
    }
}

/// `-[log p_real + log(1 - p_fake)]` averaged over pairs.
pub fn gan_loss_d(p_real: &[f64], p_fake: &[f64]) -> f64 {
    assert_eq!(p_real.len(), p_fake.len(), "batch mismatch");
    if p_real.is_empty() {
        return 0.0;
    }
    let s: f64 = p_real.iter().zip(p_fake).map(|(r, f)| -(r.ln() + (1.0 - f).ln())).sum();
    s / p_real.len() as f64
}

/// Non-saturating generator loss `-log p_fake`, averaged.
pub fn gan_loss_g(p_fake: &[f64]) -> f64 {
    if p_fake.is_empty() {
        return 0.0;
    }
    p_fake.iter().map(|p| -p.ln()).sum::<f64>() / p_fake.len() as f64
}

/// `L_OD + λ·L_GAN` with the sign of λ chosen by the caller: positive when
/// training the generator, negative when training the discriminator.
pub fn total_loss(l_od: f64, l_gan: f64, lambda_signed: f64) -> f64 {
    l_od + lambda_signed * l_gan
}

/// Discriminator step quantities for one batch.
#[derive(Clone, Debug)]
pub struct DiscriminatorStep<T> {
    pub loss: f64,
    pub grads: DiscriminatorGrads<T>,
    pub p_real: Vec<f64>,
    pub p_fake: Vec<f64>,
}

impl<T> DiscriminatorStep<T> {
    /// Fraction of real inputs scored above 0.5 and of fake inputs below it.
    pub fn accuracy(&self) -> (f64, f64) {
        let frac = |v: &[f64], f: fn(f64) -> bool| v.iter().filter(|&&p| f(p)).count() as f64 / v.len().max(1) as f64;
        (frac(&self.p_real, |p| p > 0.5), frac(&self.p_fake, |p| p < 0.5))
    }
}

/// [`gan_loss_d`] of `real` (baseline outputs on clean images) against
/// `fake` (generator outputs on the augmented batch) and its gradient with
/// respect to the discriminator parameters.
pub fn discriminator_grads<T: Real>(
    d: &DiscriminatorParams<T>,
    real: &[&DetectionOutput<T>],
    fake: &[&DetectionOutput<T>],
) -> Result<DiscriminatorStep<T>> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Shape(format!(
            "discriminator batch needs equal non-empty halves, got {} real and {} fake",
            real.len(),
            fake.len()
        )));
    }
    let inv = 1.0 / real.len() as f64;
    let mut grads = DiscriminatorParams::zeros(d.input_len());
    let mut p_real = Vec::with_capacity(real.len());
    let mut p_fake = Vec::with_capacity(fake.len());
    for (r, f) in real.iter().zip(fake) {
        let zr = d.logit(r)?;
        let zf = d.logit(f)?;
        d.accumulate(&mut grads, r, bce_dz(zr, true) * inv);
        d.accumulate(&mut grads, f, bce_dz(zf, false) * inv);
        p_real.push(sigmoid(zr.clamp(-PRE_ACTIVATION_CLAMP, PRE_ACTIVATION_CLAMP)));
        p_fake.push(sigmoid(zf.clamp(-PRE_ACTIVATION_CLAMP, PRE_ACTIVATION_CLAMP)));
    }
    Ok(DiscriminatorStep {
        loss: gan_loss_d(&p_real, &p_fake),
        grads,
        p_real,
        p_fake,
    })
}

/// [`gan_loss_g`] of the generator outputs under a fixed discriminator and
/// its gradient with respect to each output, ready for backpropagation
/// through the generator.
pub fn generator_adversarial_grads<T: Real>(
    d: &DiscriminatorParams<T>,
    fake: &[&DetectionOutput<T>],
) -> Result<(f64, Vec<DetectionOutput<T>>)> {
    let inv = 1.0 / fake.len().max(1) as f64;
    let mut probs = Vec::with_capacity(fake.len());
    let mut grads = Vec::with_capacity(fake.len());
    let n = fake.first().map_or(0, |f| f.class_logits.len());
    for f in fake {
        let z = d.logit(f)?;
        probs.push(sigmoid(z.clamp(-PRE_ACTIVATION_CLAMP, PRE_ACTIVATION_CLAMP)));
        let dz = bce_dz(z, true) * inv;
        let flat: Vec<T> = d.weights.iter().map(|w| T::lit(w.as_f64() * dz)).collect();
        debug_assert_eq!(flat.len(), n + f.box_offsets.len());
        grads.push(f.unflatten_like(&flat));
    }
    Ok((gan_loss_g(&probs), grads))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn output(seed: u64, shift: f64) -> DetectionOutput<f64> {
        let d = DiscriminatorParams::<f64>::init(6 * 4 + 6 * 4, 1.0, seed);
        let flat: Vec<f64> = d.weights.iter().map(|v| v + shift).collect();
        DetectionOutput::zeros(6, 4).unflatten_like(&flat)
    }

    #[test]
    fn zero_params_give_one_half() {
        let d = DiscriminatorParams::<f32>::zeros(48);
        assert_eq!(d.forward(&DetectionOutput::zeros(6, 4)).unwrap(), 0.5);
    }

    #[test]
    fn saturated_bias_stays_below_one() {
        let mut d = DiscriminatorParams::<f32>::zeros(48);
        d.bias = 30.0;
        let p = d.forward(&DetectionOutput::zeros(6, 4)).unwrap();
        assert!(p > 0.999999 && p < 1.0);
        d.bias = 1e6;
        assert!(d.forward(&DetectionOutput::zeros(6, 4)).unwrap() < 1.0);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let d = DiscriminatorParams::<f32>::zeros(10);
        assert!(matches!(d.forward(&DetectionOutput::zeros(6, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_closed_forms() {
        assert_abs_diff_eq!(gan_loss_d(&[0.5], &[0.5]), 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert!(gan_loss_d(&[1.0 - 1e-12], &[1e-12]) < 1e-9);
        let expected = (-(0.9f64.ln()) - 0.9f64.ln() + 2.0 * 2f64.ln()) / 2.0;
        assert_abs_diff_eq!(gan_loss_d(&[0.9, 0.5], &[0.1, 0.5]), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.7985, epsilon = 1e-4);
        assert_abs_diff_eq!(gan_loss_g(&[0.5]), 2f64.ln(), epsilon = 1e-12);
        assert!(gan_loss_g(&[1.0]).abs() < 1e-15);
        assert_abs_diff_eq!(gan_loss_g(&[0.9]), 0.105, epsilon = 1e-3);
        assert_abs_diff_eq!(gan_loss_g(&[0.1]), 2.303, epsilon = 1e-3);
    }

    #[test]
    fn total_loss_sign_convention() {
        assert_eq!(total_loss(1.0, 0.5, 1.0), 1.5);
        assert_eq!(total_loss(1.0, 0.5, -1.0), 0.5);
        assert_eq!(total_loss(1.0, 0.5, 0.0), 1.0);
        assert!(total_loss(1.0, 0.6, 1.0) > total_loss(1.0, 0.5, 1.0));
        assert!(total_loss(1.0, 0.6, -1.0) < total_loss(1.0, 0.5, -1.0));
    }

    #[test]
    fn discriminator_gradient_matches_finite_differences() {
        let d = DiscriminatorParams::<f64>::init(48, 0.1, 4);
        let real = [output(1, 0.3), output(2, 0.3)];
        let fake = [output(3, -0.3), output(4, -0.3)];
        let rr: Vec<_> = real.iter().collect();
        let ff: Vec<_> = fake.iter().collect();
        let step = discriminator_grads(&d, &rr, &ff).unwrap();
        let h = 1e-5;
        for i in 0..=d.input_len() {
            let bump = |delta: f64| {
                let mut e = d.clone();
                if i == d.input_len() {
                    e.bias += delta;
                } else {
                    e.weights[i] += delta;
                }
                discriminator_grads(&e, &rr, &ff).unwrap().loss
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let analytic = if i == d.input_len() { step.grads.bias } else { step.grads.weights[i] };
            assert_abs_diff_eq!(numeric, analytic, epsilon = 1e-8);
        }
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let d = DiscriminatorParams::<f64>::init(48, 0.2, 5);
        let fake = [output(6, 0.0), output(7, 0.1)];
        let ff: Vec<_> = fake.iter().collect();
        let (_, grads) = generator_adversarial_grads(&d, &ff).unwrap();
        let h = 1e-5;
        for (b, f) in fake.iter().enumerate() {
            let flat = f.flatten();
            let g = grads[b].flatten();
            for k in 0..flat.len() {
                let eval = |delta: f64| {
                    let mut v = flat.clone();
                    v[k] += delta;
                    let moved = f.unflatten_like(&v);
                    let mut batch: Vec<&DetectionOutput<f64>> = ff.clone();
                    batch[b] = &moved;
                    generator_adversarial_grads(&d, &batch).unwrap().0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                assert_abs_diff_eq!(numeric, g[k], epsilon = 1e-8);
            }
        }
    }
}
