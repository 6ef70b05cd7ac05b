use rand::Rng as _;

use super::pool::DistortionPool;
use crate::error::{Error, Result};
use crate::image::{Image, QualityTag};
use crate::rng::{substream, Rng};
use crate::synthkit::BoxLabel;

pub type LabeledImage = (Image, Vec<BoxLabel>);

/// Draws `j ~ U[1, J]` from `rng`, then applies that level.
pub fn apply_random_level(image: &Image, pool: &DistortionPool, rng: &mut Rng) -> (Image, QualityTag) {
    let j = rng.random_range(1..=pool.len());
    let noise_seed: u64 = rng.random();
    let out = pool
        .apply_level(image, j, noise_seed)
        .expect("sampled level is always in range");
    let tag = out.tag;
    (out, tag)
}

/// Keeps the first half of the batch clean and replaces each item of the
/// second half with a randomly leveled distortion of itself. Item `s` draws
/// from its own substream of `seed`, so the result does not depend on the
/// order items are processed in. Labels pass through untouched.
pub fn augment_minibatch(batch: &[LabeledImage], pool: &DistortionPool, seed: u64) -> Result<Vec<LabeledImage>> {
    let s = batch.len();
    if !s.is_multiple_of(2) {
        return Err(Error::BatchSize(s));
    }
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, (img, labels))| {
            let out = if i < s / 2 {
                img.clone().with_tag(QualityTag::CLEAN)
            } else {
                apply_random_level(img, pool, &mut substream(seed, &[i as u64])).0
            };
            (out, labels.clone())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{convolve2d, defocus_kernel, Family};
    use crate::rng::rng_from;
    use crate::synthkit::{render_scene, SceneSpec};

    fn batch(n: usize) -> Vec<LabeledImage> {
        let spec = SceneSpec {
            image_size: 32,
            num_objects: 1,
            min_object_side: 8,
            max_object_side: 16,
            ..SceneSpec::default()
        };
        (0..n).map(|i| render_scene(&spec, i as u64).unwrap()).collect()
    }

    #[test]
    fn single_level_pool_always_level_one() {
        let pool = DistortionPool::with_radii(Family::Defocus, &[2]).unwrap();
        let img = Image::filled(8, 8, 3, 0.5);
        let mut rng = rng_from(1);
        for _ in 0..20 {
            let (_, tag) = apply_random_level(&img, &pool, &mut rng);
            assert_eq!(tag.level_index, Some(1));
            assert_eq!(tag.family, Some(Family::Defocus));
        }
    }

    #[test]
    fn levels_drawn_uniformly() {
        let pool = DistortionPool::standard(Family::Gaussian, 0);
        let img = Image::filled(2, 2, 3, 0.5);
        let mut rng = rng_from(7);
        let mut counts = [0usize; 6];
        for _ in 0..6000 {
            let (_, tag) = apply_random_level(&img, &pool, &mut rng);
            assert_eq!(tag.family, Some(Family::Gaussian));
            counts[tag.level_index.unwrap() - 1] += 1;
        }
        for c in counts {
            assert!((900..=1100).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn first_half_clean_second_half_distorted() {
        let pool = DistortionPool::standard(Family::Gaussian, 0);
        let input = batch(4);
        let out = augment_minibatch(&input, &pool, 3).unwrap();
        assert_eq!(out.len(), 4);
        for (i, ((img, labels), (orig, orig_labels))) in out.iter().zip(&input).enumerate() {
            assert_eq!(labels, orig_labels);
            if i < 2 {
                assert!(img.tag.is_clean);
                assert_eq!(img.data(), orig.data());
            } else {
                assert!(!img.tag.is_clean);
            }
        }
    }

    #[test]
    fn single_defocus_level_matches_direct_convolution() {
        let pool = DistortionPool::with_radii(Family::Defocus, &[2]).unwrap();
        let input = batch(2);
        let out = augment_minibatch(&input, &pool, 9).unwrap();
        let expect = convolve2d(&input[1].0, &defocus_kernel(2).unwrap());
        assert_eq!(out[1].0.data(), expect.data());
        assert_eq!(out[0].0.data(), input[0].0.data());
    }

    #[test]
    fn odd_batch_rejected() {
        let pool = DistortionPool::standard(Family::Gaussian, 0);
        assert!(matches!(
            augment_minibatch(&batch(3), &pool, 0),
            Err(Error::BatchSize(3))
        ));
    }
}
