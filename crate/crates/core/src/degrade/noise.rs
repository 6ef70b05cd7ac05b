use rand_distr::{Distribution, Normal};

use super::Family;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{rng_from, Rng};

/// Noise standard deviations on the 0-255 scale.
pub const AWGN_SIGMAS: [f64; 5] = [20.0, 40.0, 60.0, 80.0, 100.0];

pub(crate) fn add_noise(image: &Image, sigma: f64, rng: &mut Rng) -> Image {
    let mut out = image.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for v in out.data_mut() {
        let n: f64 = normal.sample(rng);
        *v = (*v as f64 + n).clamp(0.0, 1.0) as f32;
    }
    out
}

/// Additive white Gaussian noise, `sigma_255` on the 0-255 scale. A sigma of
/// exactly zero returns the input unchanged.
pub fn awgn(image: &Image, sigma_255: f64, seed: u64) -> Result<Image> {
    if sigma_255 != 0.0 && !AWGN_SIGMAS.contains(&sigma_255) {
        return Err(Error::Level {
            family: Family::Awgn.name().into(),
            value: sigma_255.to_string(),
            valid: "sigma in {20, 40, 60, 80, 100}".into(),
        });
    }
    Ok(add_noise(image, sigma_255 / 255.0, &mut rng_from(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = Image::filled(8, 8, 3, 0.3);
        assert_eq!(awgn(&img, 0.0, 1).unwrap(), img);
    }

    #[test]
    fn sample_std_matches_sigma() {
        let img = Image::filled(96, 96, 3, 0.5);
        let out = awgn(&img, 20.0, 42).unwrap();
        let d: Vec<f64> = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (*a - *b) as f64)
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let target = 20.0 / 255.0;
        assert!(std >= target * 0.97 && std <= target * 1.03, "{std} vs {target}");
    }

    #[test]
    fn deterministic_in_seed() {
        let img = Image::filled(16, 16, 3, 0.5);
        assert_eq!(awgn(&img, 40.0, 3).unwrap(), awgn(&img, 40.0, 3).unwrap());
        assert_ne!(awgn(&img, 40.0, 3).unwrap(), awgn(&img, 40.0, 4).unwrap());
    }

    #[test]
    fn off_pool_sigma_rejected() {
        let img = Image::filled(4, 4, 3, 0.5);
        assert!(matches!(awgn(&img, 30.0, 1), Err(Error::Level { .. })));
    }
}
