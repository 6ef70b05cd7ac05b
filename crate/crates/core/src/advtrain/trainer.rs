use std::time::Instant;

use rand::seq::SliceRandom;

use super::adam::{Adam, AdamConfig};
use super::config::{TrainConfig, TrainMode};
use super::data::{LabeledSet, TrainingData};
use super::discriminator::{discriminator_grads, generator_adversarial_grads, DiscriminatorParams};
use super::log::{LogRecord, TrainLog};
use super::schedule::{PlateauEvent, PlateauState, Schedule};
use crate::degrade::{augment_minibatch, DistortionPool, LabeledImage};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::tinyssd::{
    backward, detection_loss_with_grad, forward, forward_train, Checkpoint, CheckpointMeta, DetectionOutput,
    DetectorParams, EncodedTargets, LossConfig,
};

const TAG_SHUFFLE: u64 = 1;
const TAG_AUGMENT: u64 = 2;
const TAG_VAL: u64 = 3;
const TAG_D_INIT: u64 = 4;

/// Everything a training run produces. `checkpoint` holds the final
/// detector; `snapshots` the detector at each learning-rate decay. The
/// checkpoints carry an empty config hash for the caller to fill in.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub snapshots: Vec<Checkpoint>,
    pub log: TrainLog,
    pub discriminator: Option<DiscriminatorParams<f32>>,
}

/// Detection loss of `params` over a whole labeled set, normalized once by
/// the total number of selected anchors.
pub fn dataset_loss(params: &DetectorParams<f32>, set: &LabeledSet, cfg: &LossConfig) -> Result<crate::tinyssd::LossParts> {
    let outputs = set
        .items
        .iter()
        .map(|(img, _)| forward(params, img))
        .collect::<Result<Vec<_>>>()?;
    let o: Vec<&DetectionOutput<f32>> = outputs.iter().collect();
    let t: Vec<&EncodedTargets> = set.targets.iter().collect();
    Ok(detection_loss_with_grad(&o, &t, cfg).0)
}

/// Trains a detector from `init` on clean batches.
pub fn train_baseline(cfg: &TrainConfig, init: DetectorParams<f32>, data: &TrainingData) -> Result<TrainOutcome> {
    Run::new(cfg, TrainMode::Baseline, init, None, data, None, None)?.execute()
}

/// Continues training the baseline on augmented batches with the detection
/// loss alone.
pub fn train_finetune(cfg: &TrainConfig, baseline: &Checkpoint, data: &TrainingData, pool: &DistortionPool) -> Result<TrainOutcome> {
    Run::new(
        cfg,
        TrainMode::Finetune,
        baseline.params.clone(),
        None,
        data,
        Some(pool),
        Some(baseline.id()),
    )?
    .execute()
}

/// Adversarial training: the generator starts from the baseline, the
/// baseline stays frozen and supplies the discriminator's real samples.
pub fn train_gando(cfg: &TrainConfig, baseline: &Checkpoint, data: &TrainingData, pool: &DistortionPool) -> Result<TrainOutcome> {
    Run::new(
        cfg,
        TrainMode::Gando,
        baseline.params.clone(),
        Some(&baseline.params),
        data,
        Some(pool),
        Some(baseline.id()),
    )?
    .execute()
}

struct Run<'a> {
    cfg: TrainConfig,
    mode: TrainMode,
    g: DetectorParams<f32>,
    baseline: Option<&'a DetectorParams<f32>>,
    d: Option<DiscriminatorParams<f32>>,
    adam_g: Adam,
    adam_d: Option<Adam>,
    train: &'a LabeledSet,
    val: LabeledSet,
    pool: Option<&'a DistortionPool>,
    parent_id: Option<String>,
    log: TrainLog,
    snapshots: Vec<Checkpoint>,
    iteration: usize,
}

impl<'a> Run<'a> {
    fn new(
        cfg: &TrainConfig,
        mode: TrainMode,
        init: DetectorParams<f32>,
        baseline: Option<&'a DetectorParams<f32>>,
        data: &'a TrainingData,
        pool: Option<&'a DistortionPool>,
        parent_id: Option<String>,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut cfg = cfg.clone();
        cfg.mode = mode;
        if data.train.len() < cfg.batch_size {
            return Err(Error::Config(format!(
                "train split has {} items, fewer than one batch of {}",
                data.train.len(),
                cfg.batch_size
            )));
        }
        if data.val.is_empty() {
            return Err(Error::Config("validation split is empty".into()));
        }
        if let Some(b) = baseline {
            if b.arch != init.arch {
                return Err(Error::Checkpoint("baseline architecture differs from the generator".into()));
            }
        }
        let val = match pool {
            Some(p) => data.val.augmented(p, derive_seed(cfg.seed, &[TAG_VAL])),
            None => data.val.clone(),
        };
        let adam_cfg = |lr| AdamConfig {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        };
        let (d, adam_d) = if mode == TrainMode::Gando {
            let len = init.arch.num_anchors() * (init.arch.num_logits() + 4);
            let d = DiscriminatorParams::init(len, cfg.d_init_std, derive_seed(cfg.seed, &[TAG_D_INIT]));
            let adam = Adam::for_discriminator(adam_cfg(cfg.lr_d), &d);
            (Some(d), Some(adam))
        } else {
            (None, None)
        };
        Ok(Self {
            adam_g: Adam::for_detector(adam_cfg(cfg.lr), &init),
            g: init,
            baseline,
            d,
            adam_d,
            train: &data.train,
            val,
            pool,
            parent_id,
            log: TrainLog::default(),
            snapshots: Vec::new(),
            iteration: 0,
            mode,
            cfg,
        })
    }

    fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint::new(
            CheckpointMeta {
                label: self.mode.name().to_string(),
                config_hash: String::new(),
                global_seed: self.cfg.seed,
                epoch,
                parent_id: self.parent_id.clone(),
                arch: self.g.arch.clone(),
            },
            self.g.clone(),
        )
    }

    fn non_finite(&self) -> Error {
        Error::NonFinite {
            seed: self.cfg.seed,
            iteration: self.iteration,
        }
    }

    fn step(&mut self, epoch: usize, clean: Vec<LabeledImage>, targets: Vec<&EncodedTargets>) -> Result<()> {
        self.iteration += 1;
        let cfg = &self.cfg;
        let inputs = match self.pool {
            Some(pool) if self.mode != TrainMode::Baseline => {
                augment_minibatch(&clean, pool, derive_seed(cfg.seed, &[TAG_AUGMENT, self.iteration as u64]))?
            }
            _ => clean.clone(),
        };
        let passes = inputs
            .iter()
            .map(|(img, _)| forward_train(&self.g, img))
            .collect::<Result<Vec<_>>>()?;
        let fake: Vec<&DetectionOutput<f32>> = passes.iter().map(|(o, _)| o).collect();
        let (parts, mut out_grads) = detection_loss_with_grad(&fake, &targets, &cfg.loss);
        if !parts.total.is_finite() {
            return Err(self.non_finite());
        }

        let (mut l_gan_g, mut d_loss, mut d_acc) = (None, None, None);
        if let (Some(d), Some(baseline)) = (self.d.as_mut(), self.baseline) {
            if cfg.is_d_iteration(self.iteration) {
                let real = clean
                    .iter()
                    .map(|(img, _)| forward(baseline, img))
                    .collect::<Result<Vec<_>>>()?;
                let real: Vec<&DetectionOutput<f32>> = real.iter().collect();
                let step = discriminator_grads(d, &real, &fake)?;
                self.adam_d.as_mut().expect("gando run").step_discriminator(d, &step.grads);
                if !step.loss.is_finite() || !d.all_finite() {
                    return Err(Error::NonFinite {
                        seed: cfg.seed,
                        iteration: self.iteration,
                    });
                }
                d_loss = Some(step.loss);
                d_acc = Some(step.accuracy());
            }
            let (l, adv) = generator_adversarial_grads(d, &fake)?;
            let lambda = cfg.lambda as f32;
            for (g, a) in out_grads.iter_mut().zip(&adv) {
                g.class_logits.scaled_add(lambda, &a.class_logits);
                g.box_offsets.scaled_add(lambda, &a.box_offsets);
            }
            l_gan_g = Some(l);
        }

        let mut grads = self.g.zeros_like();
        for ((_, cache), og) in passes.iter().zip(&out_grads) {
            backward(&self.g, cache, og, &mut grads);
        }
        crate::tinyssd::mask_frozen(&self.g, &mut grads, cfg.freeze_after);
        if !grads.all_finite() {
            return Err(self.non_finite());
        }
        let freeze = cfg.freeze_after;
        self.adam_g.step_detector(&mut self.g, &grads, freeze);

        self.log.push(LogRecord::Iteration {
            iteration: self.iteration,
            epoch,
            l_od: parts.total,
            l_class: parts.class_mean(),
            l_bb: parts.bb_mean(),
            l_gan_g,
            d_loss,
            d_acc_real: d_acc.map(|a| a.0),
            d_acc_fake: d_acc.map(|a| a.1),
        });
        Ok(())
    }

    fn set_lr_multiplier(&mut self, epoch: usize, multiplier: f64) {
        let from = self.adam_g.cfg.lr;
        let to = self.cfg.lr * multiplier;
        self.adam_g.set_lr(to);
        if let Some(a) = self.adam_d.as_mut() {
            a.set_lr(self.cfg.lr_d * multiplier);
        }
        self.log.push(LogRecord::LrChange { epoch, from, to });
    }

    fn execute(mut self) -> Result<TrainOutcome> {
        let start = Instant::now();
        let mut plateau = PlateauState::new(self.cfg.patience, 1.0 / self.cfg.decay_factor, self.cfg.max_decays);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let s = self.cfg.batch_size;
        let per_epoch = (self.train.len() / s).min(self.cfg.iters_per_epoch.unwrap_or(usize::MAX));
        let mut reason = "max_epochs";
        let mut epochs_run = 0;
        for epoch in 0..self.cfg.max_epochs {
            order.shuffle(&mut substream(self.cfg.seed, &[TAG_SHUFFLE, epoch as u64]));
            for b in 0..per_epoch {
                let idx = &order[b * s..(b + 1) * s];
                let clean: Vec<LabeledImage> = idx.iter().map(|&i| self.train.items[i].clone()).collect();
                let targets: Vec<&EncodedTargets> = idx.iter().map(|&i| &self.train.targets[i]).collect();
                self.step(epoch, clean, targets)?;
            }
            epochs_run = epoch + 1;

            let val_loss = dataset_loss(&self.g, &self.val, &self.cfg.loss)?.total;
            if !val_loss.is_finite() {
                return Err(self.non_finite());
            }
            let event = match self.cfg.schedule {
                Schedule::Plateau => plateau.observe(val_loss),
                Schedule::TwoPhase { decay_epoch } if epoch + 1 == decay_epoch => PlateauEvent::Decay,
                Schedule::TwoPhase { .. } => PlateauEvent::None,
            };
            self.log.push(LogRecord::Epoch {
                epoch,
                val_loss,
                lr: self.adam_g.cfg.lr,
                bad_epochs: plateau.bad_epochs,
            });
            match event {
                PlateauEvent::None => {}
                PlateauEvent::Decay => {
                    let multiplier = match self.cfg.schedule {
                        Schedule::Plateau => plateau.multiplier,
                        Schedule::TwoPhase { .. } => 1.0 / self.cfg.decay_factor,
                    };
                    self.set_lr_multiplier(epoch, multiplier);
                    self.snapshots.push(self.checkpoint(epoch + 1));
                    self.log.push(LogRecord::Snapshot {
                        epoch,
                        reason: "lr_decay".into(),
                    });
                }
                PlateauEvent::Terminate => {
                    reason = "plateau";
                    break;
                }
            }
        }
        self.log.push(LogRecord::End {
            epochs: epochs_run,
            iterations: self.iteration,
            reason: reason.into(),
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
        Ok(TrainOutcome {
            checkpoint: self.checkpoint(epochs_run),
            snapshots: self.snapshots,
            log: self.log,
            discriminator: self.d,
        })
    }
}
