//! Detector training. The adversarial trainer pits a generator detector
//! against a one-layer discriminator that scores raw head outputs, with a
//! frozen baseline as the reference. Baseline and fine-tuning runs share the
//! same loop without the discriminator.

mod adam;
mod config;
mod data;
mod discriminator;
mod log;
mod schedule;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use config::{TrainConfig, TrainMode};
pub use data::{LabeledSet, TrainingData};
pub use discriminator::{
    discriminator_grads, gan_loss_d, gan_loss_g, generator_adversarial_grads, total_loss, DiscriminatorGrads,
    DiscriminatorParams, DiscriminatorStep, PRE_ACTIVATION_CLAMP,
};
pub use log::{LogRecord, TrainLog};
pub use schedule::{lr_plateau_step, PlateauEvent, PlateauState, Schedule};
pub use trainer::{dataset_loss, train_baseline, train_finetune, train_gando, TrainOutcome};

use crate::error::Result;
use crate::tinyssd::{DetectorParams, Layer, Real};

/// Trainability mask for partial retraining: tensors up to and including
/// layer `k` train, later ones stay frozen. `None` trains everything.
pub fn freeze_after<T: Real>(params: &DetectorParams<T>, k: Option<&str>) -> Result<Vec<bool>> {
    let k = k.map(Layer::parse).transpose()?;
    Ok((0..params.num_tensors()).map(|i| params.trainable(i, k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinyssd::ArchConfig;

    #[test]
    fn freeze_masks() {
        let p = DetectorParams::<f32>::zeros(&ArchConfig::default()).unwrap();
        assert!(freeze_after(&p, None).unwrap().iter().all(|&t| t));
        let first = freeze_after(&p, Some("block1")).unwrap();
        let names: Vec<_> = (0..p.num_tensors()).filter(|&i| first[i]).map(|i| p.tensor_info(i).0).collect();
        assert_eq!(names, vec!["block1.conv.weight", "block1.conv.bias"]);
        assert!(freeze_after(&p, Some("block9")).is_err());
    }
}
