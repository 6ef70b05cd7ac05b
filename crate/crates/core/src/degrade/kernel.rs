use super::Family;
use crate::error::{Error, Result};

/// Blur radii (pixels) of the Gaussian and defocus pools.
pub const BLUR_RADII: [usize; 6] = [2, 4, 6, 8, 10, 12];

/// Normalized, non-negative 2D blur kernel with odd side length.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    side: usize,
    taps: Vec<f64>,
    pub family: Family,
    /// 1-based position in the owning pool.
    pub level_index: usize,
    pub nominal_radius: f64,
}

impl Kernel {
    /// Normalizes `weights` to sum to one. Panics on an even side or a zero sum,
    /// both of which are construction bugs.
    pub(crate) fn from_weights(
        side: usize,
        mut taps: Vec<f64>,
        family: Family,
        level_index: usize,
        nominal_radius: f64,
    ) -> Self {
        assert!(side % 2 == 1, "kernel side must be odd");
        assert_eq!(taps.len(), side * side);
        let sum: f64 = taps.iter().sum();
        assert!(sum > 0.0, "kernel has no mass");
        taps.iter_mut().for_each(|t| *t /= sum);
        Self {
            side,
            taps,
            family,
            level_index,
            nominal_radius,
        }
    }

    /// The 1x1 identity kernel.
    pub fn identity(family: Family) -> Self {
        Self::from_weights(1, vec![1.0], family, 1, 0.0)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(u, v)` from the center, `u` horizontal.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let r = self.radius() as isize;
        self.taps[((v + r) * self.side as isize + (u + r)) as usize]
    }

    pub fn nonzero_count(&self) -> usize {
        self.taps.iter().filter(|&&t| t > 0.0).count()
    }
}

fn check_radius(family: Family, radius: usize) -> Result<usize> {
    match BLUR_RADII.iter().position(|&r| r == radius) {
        Some(i) => Ok(i + 1),
        None => Err(Error::Level {
            family: family.name().into(),
            value: radius.to_string(),
            valid: "radius in {2, 4, 6, 8, 10, 12}".into(),
        }),
    }
}

pub(crate) fn gaussian_taps(radius: usize) -> Vec<f64> {
    let side = 2 * radius + 1;
    let sigma = radius as f64 / 2.0;
    let r = radius as isize;
    let mut taps = Vec::with_capacity(side * side);
    for v in -r..=r {
        for u in -r..=r {
            let d2 = (u * u + v * v) as f64;
            taps.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    taps
}

pub(crate) fn disk_taps(radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut taps = Vec::new();
    for v in -r..=r {
        for u in -r..=r {
            taps.push(if u * u + v * v <= r * r { 1.0 } else { 0.0 });
        }
    }
    taps
}

/// Gaussian blur with standard deviation half the radius, truncated to a
/// `(2r+1)²` support.
pub fn gaussian_kernel(radius: usize) -> Result<Kernel> {
    let level = check_radius(Family::Gaussian, radius)?;
    Ok(Kernel::from_weights(
        2 * radius + 1,
        gaussian_taps(radius),
        Family::Gaussian,
        level,
        radius as f64,
    ))
}

/// Uniform average over the integer lattice points of a disk.
pub fn defocus_kernel(radius: usize) -> Result<Kernel> {
    let level = check_radius(Family::Defocus, radius)?;
    Ok(Kernel::from_weights(
        2 * radius + 1,
        disk_taps(radius),
        Family::Defocus,
        level,
        radius as f64,
    ))
}
