use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::tinyssd::{Layer, LossConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Detection loss on clean batches only.
    Baseline,
    /// Detection loss on augmented batches.
    Finetune,
    /// Detection loss plus the adversarial term on augmented batches.
    Gando,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Finetune => "finetune",
            TrainMode::Gando => "gando",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "finetune" => Ok(TrainMode::Finetune),
            "gando" => Ok(TrainMode::Gando),
            other => Err(Error::Config(format!(
                "unknown training mode '{other}' (expected baseline, finetune or gando)"
            ))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Magnitude of the adversarial weight; the sign is fixed by the update.
    pub lambda: f64,
    /// Detector (generator) learning rate.
    pub lr: f64,
    /// Discriminator learning rate.
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Plateau patience in epochs.
    pub patience: usize,
    /// The learning rate is divided by this at every decay.
    pub decay_factor: f64,
    pub max_decays: usize,
    /// Mini-batch size S; must be even so the batch splits 1:1.
    pub batch_size: usize,
    /// The discriminator is updated on iterations 1, 1 + period, ...
    pub d_period: usize,
    pub d_init_std: f64,
    pub freeze_after: Option<Layer>,
    pub max_epochs: usize,
    /// Caps iterations per epoch; `None` uses every full batch.
    pub iters_per_epoch: Option<usize>,
    pub schedule: Schedule,
    pub seed: u64,
    pub loss: LossConfig,
    /// IoU at which an anchor is matched to a ground-truth box.
    pub match_iou: f64,
}

impl TrainConfig {
    /// Defaults for `mode`: Adam (0.9, 0.99) with patience 4 for detector-only
    /// training, Adam (0.5, 0.99) with patience 10 for adversarial training.
    pub fn for_mode(mode: TrainMode) -> Self {
        let (beta1, patience) = match mode {
            TrainMode::Gando => (0.5, 10),
            TrainMode::Baseline | TrainMode::Finetune => (0.9, 4),
        };
        Self {
            mode,
            lambda: 1.0,
            lr: 1e-5,
            lr_d: 1e-5,
            beta1,
            beta2: 0.99,
            eps: 1e-8,
            patience,
            decay_factor: 10.0,
            max_decays: 2,
            batch_size: 16,
            d_period: 2,
            d_init_std: 0.02,
            freeze_after: None,
            max_epochs: 100,
            iters_per_epoch: None,
            schedule: Schedule::Plateau,
            seed: 0,
            loss: LossConfig::default(),
            match_iou: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.lambda > 0.0) {
            return fail("lambda must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(2) {
            return fail("batch_size must be even and positive");
        }
        if self.d_period == 0 {
            return fail("d_period must be at least 1");
        }
        if !(self.decay_factor >= 1.0) {
            return fail("decay_factor must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr_d >= 0.0) {
            return fail("learning rates must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        Ok(())
    }

    /// Whether the discriminator is updated on 1-based `iteration`.
    pub fn is_d_iteration(&self, iteration: usize) -> bool {
        (iteration - 1).is_multiple_of(self.d_period)
    }
}
