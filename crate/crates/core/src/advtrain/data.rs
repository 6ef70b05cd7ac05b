use crate::degrade::{apply_random_level, DistortionPool, LabeledImage};
use crate::error::Result;
use crate::image::Image;
use crate::rng::substream;
use crate::synthkit::{DatasetManifest, Split};
use crate::tinyssd::{encode_targets, AnchorSet, EncodedTargets};

/// Rendered images with labels and their anchor targets.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub items: Vec<LabeledImage>,
    pub targets: Vec<EncodedTargets>,
}

impl LabeledSet {
    pub fn new(items: Vec<LabeledImage>, anchors: &AnchorSet, match_iou: f64) -> Self {
        let targets = items.iter().map(|(_, l)| encode_targets(l, anchors, match_iou)).collect();
        Self { items, targets }
    }

    pub fn from_manifest(manifest: &DatasetManifest, split: Split, anchors: &AnchorSet, match_iou: f64) -> Result<Self> {
        let items = manifest
            .split(split)
            .map(|r| r.render(&manifest.spec).map(|img| (img, r.labels.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(items, anchors, match_iou))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn images(&self) -> Vec<&Image> {
        self.items.iter().map(|(i, _)| i).collect()
    }

    /// Same labels, every odd-indexed image replaced by a randomly leveled
    /// distortion drawn from the substream `(seed, i)`. The result is fixed
    /// for a given seed, which keeps validation losses comparable across
    /// epochs.
    pub fn augmented(&self, pool: &DistortionPool, seed: u64) -> Self {
        let items = self
            .items
            .iter()
            .enumerate()
            .map(|(i, (img, labels))| {
                let img = if i % 2 == 1 {
                    apply_random_level(img, pool, &mut substream(seed, &[i as u64])).0
                } else {
                    img.clone()
                };
                (img, labels.clone())
            })
            .collect();
        Self {
            items,
            targets: self.targets.clone(),
        }
    }
}

/// Train and validation sets for one run.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub train: LabeledSet,
    pub val: LabeledSet,
}

impl TrainingData {
    pub fn from_manifest(manifest: &DatasetManifest, anchors: &AnchorSet, match_iou: f64) -> Result<Self> {
        Ok(Self {
            train: LabeledSet::from_manifest(manifest, Split::Train, anchors, match_iou)?,
            val: LabeledSet::from_manifest(manifest, Split::Val, anchors, match_iou)?,
        })
    }
}
