mod common;

use common::*;
use gando::advtrain::{
    dataset_loss, discriminator_grads, gan_loss_g, generator_adversarial_grads, train_finetune, train_gando, Adam,
    AdamConfig, DiscriminatorParams, LogRecord, TrainLog, TrainMode,
};
use gando::degrade::{DistortionPool, Family, Kernel};
use gando::tinyssd::{backward, forward, forward_train, DetectionOutput, DetectorParams, Layer, LossConfig};

fn without_wall_clock(log: &TrainLog) -> Vec<LogRecord> {
    log.records
        .iter()
        .map(|r| match r {
            LogRecord::End {
                epochs,
                iterations,
                reason,
                ..
            } => LogRecord::End {
                epochs: *epochs,
                iterations: *iterations,
                reason: reason.clone(),
                wall_clock_s: 0.0,
            },
            other => other.clone(),
        })
        .collect()
}

fn outputs(p: &DetectorParams<f32>, images: &[gando::image::Image]) -> Vec<DetectionOutput<f32>> {
    images.iter().map(|i| forward(p, i).unwrap()).collect()
}

/// Baseline outputs on clean images (real) against baseline outputs on
/// heavily defocused copies (fake).
fn real_fake() -> (DetectorParams<f32>, Vec<gando::image::Image>, Vec<DetectionOutput<f32>>, Vec<DetectionOutput<f32>>) {
    let data = tiny_data(1);
    let base = tiny_baseline(&data).params;
    let pool = DistortionPool::with_radii(Family::Defocus, &[6]).unwrap();
    let clean: Vec<_> = data.train.items.iter().map(|(i, _)| i.clone()).collect();
    let blurred: Vec<_> = clean.iter().map(|i| pool.apply_level(i, 1, 0).unwrap()).collect();
    let real = outputs(&base, &clean);
    let fake = outputs(&base, &blurred);
    (base, blurred, real, fake)
}

fn trained_discriminator(real: &[DetectionOutput<f32>], fake: &[DetectionOutput<f32>], steps: usize) -> (DiscriminatorParams<f32>, Vec<f64>) {
    let mut d = DiscriminatorParams::<f32>::init(real[0].flat_len(), 0.02, 3);
    let cfg = AdamConfig {
        lr: 1e-2,
        beta1: 0.5,
        beta2: 0.99,
        eps: 1e-8,
    };
    let mut adam = Adam::for_discriminator(cfg, &d);
    let r: Vec<_> = real.iter().collect();
    let f: Vec<_> = fake.iter().collect();
    let mut losses = Vec::new();
    for _ in 0..steps {
        let step = discriminator_grads(&d, &r, &f).unwrap();
        losses.push(step.loss);
        adam.step_discriminator(&mut d, &step.grads);
    }
    (d, losses)
}

#[test]
fn discriminator_learns_to_separate_clean_from_degraded_outputs() {
    let (_, _, real, fake) = real_fake();
    let (d, losses) = trained_discriminator(&real, &fake, 300);
    let r: Vec<_> = real.iter().collect();
    let f: Vec<_> = fake.iter().collect();
    let step = discriminator_grads(&d, &r, &f).unwrap();
    let (acc_real, acc_fake) = step.accuracy();
    assert!(acc_real >= 0.9 && acc_fake >= 0.9, "accuracy {acc_real} / {acc_fake}");
    assert!(step.loss < 0.5 * losses[0], "loss {} -> {}", losses[0], step.loss);
}

#[test]
fn generator_step_raises_the_fake_score() {
    let (base, blurred, real, fake) = real_fake();
    let (d, _) = trained_discriminator(&real, &fake, 300);
    let passes: Vec<_> = blurred.iter().map(|i| forward_train(&base, i).unwrap()).collect();
    let outs: Vec<_> = passes.iter().map(|(o, _)| o).collect();
    let (before, out_grads) = generator_adversarial_grads(&d, &outs).unwrap();
    let mut grads = base.zeros_like();
    for ((_, cache), g) in passes.iter().zip(&out_grads) {
        backward(&base, cache, g, &mut grads);
    }
    let mut g = base.clone();
    g.add_scaled(&grads, -1e-3);
    let after_outs = outputs(&g, &blurred);
    let p: Vec<f64> = after_outs.iter().map(|o| d.forward(o).unwrap()).collect();
    let after = gan_loss_g(&p);
    assert!(after < before, "generator adversarial loss {before} -> {after}");
}

#[test]
fn baseline_is_untouched_by_adversarial_training() {
    let data = tiny_data(2);
    let base = tiny_baseline(&data);
    let bytes = base.to_bytes();
    let pool = DistortionPool::standard(Family::Defocus, 0);
    let out = train_gando(&tiny_config(TrainMode::Gando, 2), &base, &data, &pool).unwrap();
    assert_eq!(base.to_bytes(), bytes);
    assert_ne!(bits(&out.checkpoint.params), bits(&base.params));
    assert_eq!(out.checkpoint.meta.parent_id.as_deref(), Some(base.id().as_str()));
}

#[test]
fn discriminator_updates_on_odd_iterations_only() {
    let data = tiny_data(3);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Gaussian, 0);
    let out = train_gando(&tiny_config(TrainMode::Gando, 3), &base, &data, &pool).unwrap();
    let iters = out.log.iterations().count();
    assert_eq!(iters, 12);
    let expected: Vec<usize> = (1..=iters).filter(|i| i % 2 == 1).collect();
    assert_eq!(out.log.d_update_iterations(), expected);
    assert!(out.log.has_adversarial_scalars());
}

#[test]
fn discriminator_reaches_generator_only_through_weighted_term() {
    // At the smallest positive lambda the weighted adversarial gradient
    // underflows in f32, so any other path from D into G would show up as a
    // difference from the detector-only run.
    let data = tiny_data(4);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Defocus, 0);
    let mut cfg = tiny_config(TrainMode::Gando, 2);
    cfg.lambda = f64::MIN_POSITIVE;
    let gan = train_gando(&cfg, &base, &data, &pool).unwrap();
    let ft = train_finetune(&cfg, &base, &data, &pool).unwrap();
    assert_eq!(bits(&gan.checkpoint.params), bits(&ft.checkpoint.params));
    let d = gan.discriminator.expect("adversarial run returns its discriminator");
    let d0 = DiscriminatorParams::<f32>::init(d.input_len(), cfg.d_init_std, 0);
    assert_ne!(d.weights, d0.weights);
    assert!(!gan.log.d_update_iterations().is_empty());
}

#[test]
fn identity_pool_keeps_generator_loss_equal_to_baseline_loss() {
    let data = tiny_data(5);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::from_kernels(Family::Defocus, vec![Kernel::identity(Family::Defocus)]).unwrap();
    let loss = LossConfig::default();
    let aug = data.val.augmented(&pool, 9);
    let a = dataset_loss(&base.params, &data.val, &loss).unwrap().total;
    let b = dataset_loss(&base.params, &aug, &loss).unwrap().total;
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");

    let mut cfg = tiny_config(TrainMode::Gando, 1);
    cfg.lr = 0.0;
    let out = train_gando(&cfg, &base, &data, &pool).unwrap();
    let val = out.log.val_losses()[0];
    assert!((val - a).abs() < 1e-6, "{val} vs {a}");
}

#[test]
fn zero_learning_rate_leaves_generator_bit_identical() {
    let data = tiny_data(6);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Awgn, 0);
    let mut cfg = tiny_config(TrainMode::Gando, 2);
    cfg.lr = 0.0;
    let out = train_gando(&cfg, &base, &data, &pool).unwrap();
    assert_eq!(bits(&out.checkpoint.params), bits(&base.params));
}

#[test]
fn frozen_layers_stay_bit_identical_over_one_hundred_iterations() {
    let data = tiny_data(7);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Gaussian, 0);
    let mut cfg = tiny_config(TrainMode::Gando, 25);
    cfg.freeze_after = Some(Layer::Block2);
    cfg.patience = 100;
    let out = train_gando(&cfg, &base, &data, &pool).unwrap();
    assert_eq!(out.log.iterations().count(), 100);
    let g = &out.checkpoint.params;
    let mut moved = 0;
    for i in 0..g.num_tensors() {
        let (name, _, _) = g.tensor_info(i);
        let same = g.tensor(i).iter().zip(base.params.tensor(i)).all(|(a, b)| a.to_bits() == b.to_bits());
        if g.trainable(i, cfg.freeze_after) {
            moved += usize::from(!same);
        } else {
            assert!(same, "frozen tensor {name} changed");
        }
    }
    assert!(moved > 0, "no trainable tensor moved");
}

#[test]
fn runs_are_deterministic_per_seed() {
    let data = tiny_data(8);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Camshake, 1);
    let cfg = tiny_config(TrainMode::Gando, 2);
    let a = train_gando(&cfg, &base, &data, &pool).unwrap();
    let b = train_gando(&cfg, &base, &data, &pool).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(without_wall_clock(&a.log), without_wall_clock(&b.log));
    let mut other = cfg.clone();
    other.seed += 1;
    let c = train_gando(&other, &base, &data, &pool).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
}

#[test]
fn training_log_round_trips_through_jsonl() {
    let data = tiny_data(9);
    let base = tiny_baseline(&data);
    let pool = DistortionPool::standard(Family::Defocus, 0);
    let out = train_gando(&tiny_config(TrainMode::Gando, 1), &base, &data, &pool).unwrap();
    let back = TrainLog::from_jsonl(&out.log.to_jsonl()).unwrap();
    assert_eq!(back, out.log);
}
