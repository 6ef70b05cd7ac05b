use serde::{Deserialize, Serialize};

use super::camshake::{camshake_kernel, DEFAULT_CAMSHAKE_SIZE};
use super::kernel::{defocus_kernel, gaussian_kernel, Kernel, BLUR_RADII};
use super::noise::{add_noise, AWGN_SIGMAS};
use super::{convolve2d, Family};
use crate::error::{Error, Result};
use crate::image::{Image, QualityTag};
use crate::rng::{derive_seed, rng_from};

pub const CAMSHAKE_POOL_SIZE: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum Level {
    Blur(Kernel),
    /// Standard deviation on the 0-255 scale.
    Noise { sigma_255: f64 },
}

/// Ordered distortion levels of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionPool {
    family: Family,
    levels: Vec<Level>,
}

/// Serializable pool description as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub family: Family,
    /// Radii (blur), sigmas (AWGN) or kernel seeds (camshake). `None` selects
    /// the family's standard pool.
    pub levels: Option<Vec<f64>>,
}

impl DistortionPool {
    /// The family's full pool: six radii for Gaussian and defocus, five
    /// sigmas for AWGN, fifty seeded kernels for camera shake.
    pub fn standard(family: Family, seed: u64) -> Self {
        match family {
            Family::Gaussian | Family::Defocus => {
                Self::with_radii(family, &BLUR_RADII).expect("standard radii are valid")
            }
            Family::Awgn => Self::with_sigmas(&AWGN_SIGMAS).expect("standard sigmas are valid"),
            Family::Camshake => Self::camshake(seed, CAMSHAKE_POOL_SIZE, DEFAULT_CAMSHAKE_SIZE),
        }
    }

    /// Subset of the Gaussian or defocus pool. Level indices follow the order given.
    pub fn with_radii(family: Family, radii: &[usize]) -> Result<Self> {
        let levels = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut k = match family {
                    Family::Gaussian => gaussian_kernel(r)?,
                    Family::Defocus => defocus_kernel(r)?,
                    _ => {
                        return Err(Error::Config(format!(
                            "{family} is not a radius-parameterized blur"
                        )))
                    }
                };
                k.level_index = i + 1;
                Ok(Level::Blur(k))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_levels(family, levels)
    }

    pub fn with_sigmas(sigmas: &[f64]) -> Result<Self> {
        for &s in sigmas {
            if !AWGN_SIGMAS.contains(&s) {
                return Err(Error::Level {
                    family: "awgn".into(),
                    value: s.to_string(),
                    valid: "sigma in {20, 40, 60, 80, 100}".into(),
                });
            }
        }
        Self::from_levels(
            Family::Awgn,
            sigmas.iter().map(|&sigma_255| Level::Noise { sigma_255 }).collect(),
        )
    }

    pub fn camshake(seed: u64, count: usize, size: usize) -> Self {
        let levels = (0..count)
            .map(|j| {
                let mut k = camshake_kernel(derive_seed(seed, &[j as u64]), size);
                k.level_index = j + 1;
                Level::Blur(k)
            })
            .collect();
        Self {
            family: Family::Camshake,
            levels,
        }
    }

    /// Pool made of arbitrary kernels, re-indexed 1..=J in order.
    pub fn from_kernels(family: Family, kernels: Vec<Kernel>) -> Result<Self> {
        let levels = kernels
            .into_iter()
            .enumerate()
            .map(|(i, mut k)| {
                k.level_index = i + 1;
                k.family = family;
                Level::Blur(k)
            })
            .collect();
        Self::from_levels(family, levels)
    }

    fn from_levels(family: Family, levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config(format!("{family} pool has no levels")));
        }
        Ok(Self { family, levels })
    }

    pub fn from_spec(spec: &PoolSpec, seed: u64) -> Result<Self> {
        match (&spec.levels, spec.family) {
            (None, f) => Ok(Self::standard(f, seed)),
            (Some(v), Family::Gaussian | Family::Defocus) => {
                let radii = v
                    .iter()
                    .map(|&r| {
                        if r >= 0.0 && r.fract() == 0.0 {
                            Ok(r as usize)
                        } else {
                            Err(Error::Config(format!("radius {r} is not an integer")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::with_radii(spec.family, &radii)
            }
            (Some(v), Family::Awgn) => Self::with_sigmas(v),
            (Some(v), Family::Camshake) => {
                let kernels = v
                    .iter()
                    .map(|&s| camshake_kernel(derive_seed(seed, &[s as u64]), DEFAULT_CAMSHAKE_SIZE))
                    .collect();
                Self::from_kernels(Family::Camshake, kernels)
            }
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Applies 1-based level `j`. `seed` drives the noise draw for AWGN levels.
    pub fn apply_level(&self, image: &Image, j: usize, seed: u64) -> Result<Image> {
        let level = self.levels.get(j.wrapping_sub(1)).ok_or_else(|| Error::Level {
            family: self.family.name().into(),
            value: j.to_string(),
            valid: format!("level index in [1, {}]", self.len()),
        })?;
        let out = match level {
            Level::Blur(k) => convolve2d(image, k),
            Level::Noise { sigma_255 } => add_noise(image, sigma_255 / 255.0, &mut rng_from(seed)),
        };
        Ok(out.with_tag(QualityTag::distorted(self.family, j)))
    }
}
