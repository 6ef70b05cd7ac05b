//! A small two-scale single-shot detector. Four conv blocks feed class and
//! box heads on the stride-8 and stride-16 feature maps. Training uses
//! SSD-style anchor matching with a hard-negative-mined loss whose gradients
//! are derived by hand; inference ends in per-class NMS.
//!
//! The network is generic over [`Real`] so training runs in `f32` while
//! gradient checks run in `f64`.

mod anchors;
mod checkpoint;
mod decode;
mod encode;
mod loss;
mod net;
mod params;

pub use anchors::{build_anchors, AnchorSet};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use decode::{decode_detections, nms, DecodeConfig, Detection};
pub use encode::{decode_box, encode_box, encode_targets, EncodedTargets};
pub use loss::{detection_loss, detection_loss_with_grad, smooth_l1, LossConfig, LossParts};
pub use net::{backward, forward, forward_train, loss_gradients, DetectionOutput, ForwardCache};
pub(crate) use net::mask_frozen;
pub use params::{Activation, ArchConfig, DetectorParams, Downsample, Layer};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of network tensors.
pub trait Real:
    LinalgScalar + ScalarOperand + Float + NumAssign + FromPrimitive + Default + std::fmt::Debug + Send + Sync + std::iter::Sum
{
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
