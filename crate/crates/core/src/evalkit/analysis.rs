use serde::{Deserialize, Serialize};

use super::ap::{coco_ap, voc_ap, APReport, AreaBins};
use crate::advtrain::{dataset_loss, LabeledSet};
use crate::degrade::{apply_random_level, DistortionPool, Family, BLUR_RADII};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::synthkit::BoxLabel;
use crate::tinyssd::{decode_detections, forward, DecodeConfig, Detection, DetectorParams, LossConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub family: Option<Family>,
    pub l_class: f64,
    pub l_bb: f64,
}

/// Runs the detector and decodes every image of `set`.
pub fn detect_set(params: &DetectorParams<f32>, set: &LabeledSet, cfg: &DecodeConfig) -> Result<Vec<Vec<Detection>>> {
    let anchors = params.arch.anchors();
    set.items
        .iter()
        .map(|(img, _)| forward(params, img).map(|o| decode_detections(&o, &anchors, cfg)))
        .collect()
}

fn labels(set: &LabeledSet) -> Vec<Vec<BoxLabel>> {
    set.items.iter().map(|(_, l)| l.clone()).collect()
}

/// mAP at IoU 0.5 as a fraction in [0, 1]; 0 when no class has ground truth.
pub fn map50(params: &DetectorParams<f32>, set: &LabeledSet, cfg: &DecodeConfig) -> Result<f64> {
    let dets = detect_set(params, set, cfg)?;
    Ok(voc_ap(&dets, &labels(set), params.arch.num_classes, 0.5).map.unwrap_or(0.0))
}

/// Full COCO-style summary on `set`.
pub fn evaluate_set(params: &DetectorParams<f32>, set: &LabeledSet, cfg: &DecodeConfig) -> Result<APReport> {
    let dets = detect_set(params, set, cfg)?;
    let size = params.arch.image_size;
    Ok(coco_ap(&dets, &labels(set), params.arch.num_classes, size, AreaBins::scaled_for(size)))
}

/// Every image distorted by a randomly drawn level of `pool`, item `i`
/// using substream `(seed, i)`.
pub fn distort_random(set: &LabeledSet, pool: &DistortionPool, seed: u64) -> LabeledSet {
    let items = set
        .items
        .iter()
        .enumerate()
        .map(|(i, (img, l))| (apply_random_level(img, pool, &mut substream(seed, &[i as u64])).0, l.clone()))
        .collect();
    LabeledSet {
        items,
        targets: set.targets.clone(),
    }
}

/// Every image at every level of `pool`: level-major, `len(pool) · len(set)` items.
pub fn distort_all_levels(set: &LabeledSet, pool: &DistortionPool, seed: u64) -> Result<LabeledSet> {
    let mut items = Vec::with_capacity(set.len() * pool.len());
    let mut targets = Vec::with_capacity(items.capacity());
    for j in 1..=pool.len() {
        for (i, ((img, l), t)) in set.items.iter().zip(&set.targets).enumerate() {
            let noise_seed = crate::rng::derive_seed(seed, &[j as u64, i as u64]);
            items.push((pool.apply_level(img, j, noise_seed)?, l.clone()));
            targets.push(t.clone());
        }
    }
    Ok(LabeledSet { items, targets })
}

/// Mean L_class and L_bb over `set`, with `pool` applied to every image
/// when given. Both means share the split-wide anchor count normalization.
pub fn loss_decomposition(
    params: &DetectorParams<f32>,
    set: &LabeledSet,
    pool: Option<&DistortionPool>,
    seed: u64,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let parts = match pool {
        Some(p) => dataset_loss(params, &distort_random(set, p, seed), cfg)?,
        None => dataset_loss(params, set, cfg)?,
    };
    Ok(LossBreakdown {
        family: pool.map(DistortionPool::family),
        l_class: parts.class_mean(),
        l_bb: parts.bb_mean(),
    })
}

/// mAP at each radius 0, 2, ..., 12 where radius 0 is the clean set.
pub fn per_level_sweep(
    params: &DetectorParams<f32>,
    set: &LabeledSet,
    family: Family,
    cfg: &DecodeConfig,
) -> Result<Vec<(usize, f64)>> {
    if !matches!(family, Family::Gaussian | Family::Defocus) {
        return Err(Error::Level {
            family: family.name().into(),
            value: "sweep".into(),
            valid: "per-level sweeps cover gaussian and defocus".into(),
        });
    }
    let mut out = vec![(0, map50(params, set, cfg)?)];
    for &r in &BLUR_RADII {
        let pool = DistortionPool::with_radii(family, &[r])?;
        out.push((r, map50(params, &distort_all_levels(set, &pool, 0)?, cfg)?));
    }
    Ok(out)
}

/// Rows are models, columns distortion families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub models: Vec<String>,
    pub families: Vec<Family>,
    pub map: Vec<Vec<f64>>,
}

/// mAP of each model on each family's standard pool, one random level per
/// test image.
pub fn cross_distortion_matrix(
    models: &[(String, &DetectorParams<f32>)],
    families: &[Family],
    set: &LabeledSet,
    seed: u64,
    cfg: &DecodeConfig,
) -> Result<CrossMatrix> {
    let distorted: Vec<LabeledSet> = families
        .iter()
        .map(|&f| distort_random(set, &DistortionPool::standard(f, seed), seed))
        .collect();
    let map = models
        .iter()
        .map(|(_, p)| distorted.iter().map(|d| map50(p, d, cfg)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossMatrix {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        families: families.to_vec(),
        map,
    })
}
