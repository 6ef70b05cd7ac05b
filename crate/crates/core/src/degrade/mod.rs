//! Image-quality distortions (Gaussian, defocus and camera-shake blur, additive
//! white Gaussian noise) and the 1:1 clean/degraded mini-batch construction.

mod batch;
mod camshake;
mod convolve;
mod kernel;
mod noise;
mod pool;

use serde::{Deserialize, Serialize};

pub use batch::{apply_random_level, augment_minibatch, LabeledImage};
pub use camshake::{camshake_kernel, DEFAULT_CAMSHAKE_SIZE};
pub use convolve::convolve2d;
pub use kernel::{defocus_kernel, gaussian_kernel, Kernel, BLUR_RADII};
pub use noise::{awgn, AWGN_SIGMAS};
pub use pool::{DistortionPool, Level, PoolSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Defocus,
    Camshake,
    Awgn,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gaussian, Family::Defocus, Family::Camshake, Family::Awgn];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Defocus => "defocus",
            Family::Camshake => "camshake",
            Family::Awgn => "awgn",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
