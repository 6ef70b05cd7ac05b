use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BoxCoords};
use crate::synthkit::BoxLabel;
use crate::tinyssd::Detection;

/// Ground-truth area ranges in square pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaBins {
    pub small_max: f64,
    pub medium_max: f64,
}

impl AreaBins {
    /// COCO's 32² and 96² edges scaled by `(image_size / 640)²`.
    pub fn scaled_for(image_size: usize) -> Self {
        let s = (image_size as f64 / 640.0).powi(2);
        Self {
            small_max: 32.0 * 32.0 * s,
            medium_max: 96.0 * 96.0 * s,
        }
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [
            (0.0, self.small_max),
            (self.small_max, self.medium_max),
            (self.medium_max, f64::INFINITY),
        ]
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// Per-class AP at one IoU threshold. `per_class[c]` is `None` for classes
/// without ground truth; `map` averages the defined entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocResult {
    pub iou_threshold: f64,
    pub per_class: Vec<Option<f64>>,
    pub map: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct APReport {
    pub interpolation: String,
    pub per_class_ap50: Vec<Option<f64>>,
    pub map50: Option<f64>,
    pub ap_50_95: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub area_bins: AreaBins,
    pub num_gt: usize,
    pub num_dets: usize,
}

fn mean_defined(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let d: Vec<f64> = v.into_iter().flatten().collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Area under the monotone precision envelope of a ranked TP/FP sequence.
/// Ignored detections (`None`) are skipped.
pub(crate) fn all_point_ap(outcomes: &[Option<bool>], num_gt: usize) -> f64 {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for o in outcomes.iter().flatten() {
        if *o {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        if *r > prev_r {
            ap += (r - prev_r) * p;
            prev_r = *r;
        }
    }
    ap
}

/// One class's ranked detections: `(image, detection index, score, box)`
/// sorted by descending score, ties by image then detection index.
fn ranked(dets: &[Vec<Detection>], class_id: usize) -> Vec<(usize, usize, f64, BoxCoords)> {
    let mut v: Vec<_> = dets
        .iter()
        .enumerate()
        .flat_map(|(img, ds)| {
            ds.iter()
                .enumerate()
                .filter(|(_, d)| d.class_id == class_id)
                .map(move |(k, d)| (img, k, d.score, d.bbox))
        })
        .collect();
    v.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    v
}

/// Matches ranked detections of one class. A detection takes the unmatched
/// ground truth of highest IoU at or above the threshold (ties by lower gt
/// index), considering gts that count before ignored ones. Returns the
/// outcome per detection (`None` = ignored) and the number of counted gts.
fn match_class(
    dets: &[Vec<Detection>],
    gts: &[Vec<BoxLabel>],
    class_id: usize,
    threshold: f64,
    area_range: Option<((f64, f64), f64)>,
) -> (Vec<Option<bool>>, usize) {
    let in_range = |b: &BoxCoords| match area_range {
        None => true,
        Some(((lo, hi), px2)) => {
            let a = b.area() * px2;
            a >= lo && a < hi
        }
    };
    let class_gts: Vec<Vec<(BoxCoords, bool)>> = gts
        .iter()
        .map(|g| {
            g.iter()
                .filter(|l| l.class_id == class_id)
                .map(|l| (l.bbox, !in_range(&l.bbox)))
                .collect()
        })
        .collect();
    let counted = class_gts.iter().flatten().filter(|(_, ignore)| !ignore).count();
    let mut matched: Vec<Vec<bool>> = class_gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut out = Vec::new();
    for (img, _, _, bbox) in ranked(dets, class_id) {
        let mut best: Option<(bool, f64, usize)> = None;
        for (k, (g, ignore)) in class_gts[img].iter().enumerate() {
            if matched[img][k] {
                continue;
            }
            let o = iou(&bbox, g);
            if o < threshold {
                continue;
            }
            // Counted gts beat ignored ones, then higher IoU, then lower index.
            let better = match best {
                None => true,
                Some((bi, bo, _)) => (!ignore && bi) || (*ignore == bi && o > bo),
            };
            if better {
                best = Some((*ignore, o, k));
            }
        }
        out.push(match best {
            Some((ignore, _, k)) => {
                matched[img][k] = true;
                if ignore {
                    None
                } else {
                    Some(true)
                }
            }
            None if in_range(&bbox) => Some(false),
            None => None,
        });
    }
    (out, counted)
}

fn class_ap(
    dets: &[Vec<Detection>],
    gts: &[Vec<BoxLabel>],
    class_id: usize,
    threshold: f64,
    area_range: Option<((f64, f64), f64)>,
) -> Option<f64> {
    let (outcomes, num_gt) = match_class(dets, gts, class_id, threshold, area_range);
    (num_gt > 0).then(|| all_point_ap(&outcomes, num_gt))
}

/// VOC-style AP per class with all-point interpolation. `dets[i]` and
/// `gts[i]` belong to image `i`.
pub fn voc_ap(dets: &[Vec<Detection>], gts: &[Vec<BoxLabel>], num_classes: usize, iou_threshold: f64) -> VocResult {
    assert_eq!(dets.len(), gts.len(), "detections and ground truth must cover the same images");
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| class_ap(dets, gts, c, iou_threshold, None))
        .collect();
    VocResult {
        iou_threshold,
        map: mean_defined(per_class.iter().copied()),
        per_class,
    }
}

/// COCO-style summary: AP at 0.5 and 0.75, AP averaged over ten IoU
/// thresholds, and threshold-averaged AP restricted to each area bin.
pub fn coco_ap(dets: &[Vec<Detection>], gts: &[Vec<BoxLabel>], num_classes: usize, image_size: usize, bins: AreaBins) -> APReport {
    let per_threshold: Vec<VocResult> = coco_thresholds().iter().map(|&t| voc_ap(dets, gts, num_classes, t)).collect();
    let maps: Vec<Option<f64>> = per_threshold.iter().map(|r| r.map).collect();
    let ap_50_95 = if maps.iter().all(Option::is_some) {
        Some(maps.iter().flatten().sum::<f64>() / maps.len() as f64)
    } else {
        None
    };
    let px2 = (image_size * image_size) as f64;
    let bin_ap = |range: (f64, f64)| {
        let per_t: Vec<Option<f64>> = coco_thresholds()
            .iter()
            .map(|&t| mean_defined((0..num_classes).map(|c| class_ap(dets, gts, c, t, Some((range, px2))))))
            .collect();
        if per_t.iter().all(Option::is_some) {
            Some(per_t.iter().flatten().sum::<f64>() / per_t.len() as f64)
        } else {
            None
        }
    };
    let [small, medium, large] = bins.ranges();
    APReport {
        interpolation: "all-point".into(),
        per_class_ap50: per_threshold[0].per_class.clone(),
        map50: per_threshold[0].map,
        ap_50_95,
        ap75: per_threshold[5].map,
        ap_small: bin_ap(small),
        ap_medium: bin_ap(medium),
        ap_large: bin_ap(large),
        area_bins: bins,
        num_gt: gts.iter().map(Vec::len).sum(),
        num_dets: dets.iter().map(Vec::len).sum(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng as _;

    use super::*;
    use crate::rng::rng_from;

    fn label(class_id: usize, cx: f64, cy: f64, s: f64) -> BoxLabel {
        BoxLabel {
            class_id,
            bbox: BoxCoords::new(cx, cy, s, s),
        }
    }

    fn det(class_id: usize, score: f64, cx: f64, cy: f64, s: f64) -> Detection {
        Detection {
            class_id,
            score,
            bbox: BoxCoords::new(cx, cy, s, s),
        }
    }

    /// Recomputes precision and recall from scratch for every rank cut-off
    /// and integrates the upper envelope.
    fn brute_force_ap(dets: &[Vec<Detection>], gts: &[Vec<BoxLabel>], class_id: usize, thr: f64) -> Option<f64> {
        let order = ranked(dets, class_id);
        let num_gt = gts.iter().flatten().filter(|l| l.class_id == class_id).count();
        if num_gt == 0 {
            return None;
        }
        let mut points = Vec::new();
        for cut in 1..=order.len() {
            let mut used = vec![Vec::new(); gts.len()];
            let mut tp = 0;
            for &(img, _, _, b) in &order[..cut] {
                let cand = gts[img]
                    .iter()
                    .enumerate()
                    .filter(|(k, l)| l.class_id == class_id && !used[img].contains(k) && iou(&b, &l.bbox) >= thr)
                    .max_by(|x, y| iou(&b, &x.1.bbox).total_cmp(&iou(&b, &y.1.bbox)).then(y.0.cmp(&x.0)));
                if let Some((k, _)) = cand {
                    used[img].push(k);
                    tp += 1;
                }
            }
            points.push((tp as f64 / cut as f64, tp as f64 / num_gt as f64));
        }
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for (i, &(_, r)) in points.iter().enumerate() {
            if r > prev_r {
                let p = points[i..].iter().map(|q| q.0).fold(0.0, f64::max);
                ap += (r - prev_r) * p;
                prev_r = r;
            }
        }
        Some(ap)
    }

    fn random_instance(seed: u64) -> (Vec<Vec<Detection>>, Vec<Vec<BoxLabel>>) {
        let mut rng = rng_from(seed);
        let images = rng.random_range(1..4);
        let mut gts = vec![Vec::new(); images];
        let mut dets = vec![Vec::new(); images];
        for g in gts.iter_mut() {
            for _ in 0..rng.random_range(0..4) {
                g.push(label(rng.random_range(0..2), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), 0.3));
            }
        }
        let n = rng.random_range(0..=20);
        for _ in 0..n {
            let img = rng.random_range(0..images);
            let (cx, cy) = match gts[img].first() {
                Some(l) if rng.random_bool(0.6) => (
                    l.bbox.cx + rng.random_range(-0.1..0.1),
                    l.bbox.cy + rng.random_range(-0.1..0.1),
                ),
                _ => (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)),
            };
            dets[img].push(det(rng.random_range(0..2), rng.random(), cx, cy, 0.3));
        }
        (dets, gts)
    }

    #[test]
    fn hand_examples() {
        let gts = vec![vec![label(0, 0.5, 0.5, 0.2)]];
        let perfect = vec![vec![det(0, 0.3, 0.5, 0.5, 0.2)]];
        assert_eq!(voc_ap(&perfect, &gts, 1, 0.5).map, Some(1.0));
        let tp_first = vec![vec![det(0, 0.9, 0.5, 0.5, 0.2), det(0, 0.8, 0.1, 0.1, 0.1)]];
        assert_eq!(voc_ap(&tp_first, &gts, 1, 0.5).map, Some(1.0));
        let fp_first = vec![vec![det(0, 0.9, 0.1, 0.1, 0.1), det(0, 0.8, 0.5, 0.5, 0.2)]];
        assert_eq!(voc_ap(&fp_first, &gts, 1, 0.5).map, Some(0.5));
    }

    #[test]
    fn class_without_gt_is_undefined() {
        let gts = vec![vec![label(0, 0.5, 0.5, 0.2)]];
        let dets = vec![vec![det(1, 0.9, 0.5, 0.5, 0.2), det(0, 0.8, 0.5, 0.5, 0.2)]];
        let r = voc_ap(&dets, &gts, 2, 0.5);
        assert_eq!(r.per_class, vec![Some(1.0), None]);
        assert_eq!(r.map, Some(1.0));
    }

    #[test]
    fn matches_brute_force_oracle() {
        for seed in 0..100 {
            let (dets, gts) = random_instance(seed);
            let r = voc_ap(&dets, &gts, 2, 0.5);
            for c in 0..2 {
                assert_eq!(r.per_class[c], brute_force_ap(&dets, &gts, c, 0.5), "seed {seed} class {c}");
            }
        }
    }

    #[test]
    fn coco_iou_sweep_counts_three_thresholds() {
        // A detection covering 61% of its gt: TP at 0.50, 0.55, 0.60 only.
        let gt = BoxCoords::new(0.5, 0.5, 0.4, 0.4);
        let h = 0.4 * 0.61;
        let d = BoxCoords::new(0.5, 0.5 - (0.4 - h) / 2.0, 0.4, h);
        assert!((iou(&gt, &d) - 0.61).abs() < 1e-12);
        let gts = vec![vec![BoxLabel { class_id: 0, bbox: gt }]];
        let dets = vec![vec![Detection { class_id: 0, score: 0.9, bbox: d }]];
        let r = coco_ap(&dets, &gts, 1, 96, AreaBins::scaled_for(96));
        assert!((r.ap_50_95.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(r.map50, Some(1.0));
        assert_eq!(r.ap75, Some(0.0));
    }

    #[test]
    fn perfect_detector_scores_one_everywhere_defined() {
        let gts = vec![
            vec![label(0, 0.5, 0.5, 0.03), label(1, 0.2, 0.2, 0.1)],
            vec![label(1, 0.5, 0.5, 0.5)],
        ];
        let dets: Vec<Vec<Detection>> = gts
            .iter()
            .map(|g| g.iter().map(|l| Detection { class_id: l.class_id, score: 0.9, bbox: l.bbox }).collect())
            .collect();
        let r = coco_ap(&dets, &gts, 2, 96, AreaBins::scaled_for(96));
        for v in [r.map50, r.ap_50_95, r.ap75, r.ap_small, r.ap_medium, r.ap_large] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!((r.num_gt, r.num_dets), (3, 3));
    }

    #[test]
    fn empty_area_bin_is_undefined() {
        let gts = vec![vec![label(0, 0.5, 0.5, 0.5)]];
        let dets = vec![vec![det(0, 0.9, 0.5, 0.5, 0.5)]];
        let r = coco_ap(&dets, &gts, 1, 96, AreaBins::scaled_for(96));
        assert_eq!((r.ap_small, r.ap_medium, r.ap_large), (None, None, Some(1.0)));
    }

    #[test]
    fn bins_scale_with_image_size() {
        let b = AreaBins::scaled_for(640);
        assert_eq!((b.small_max, b.medium_max), (1024.0, 9216.0));
        let b = AreaBins::scaled_for(96);
        assert!((b.small_max - 23.04).abs() < 1e-9 && (b.medium_max - 207.36).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn ap_in_unit_interval_and_rank_only(seed in 0u64..5000) {
            let (dets, gts) = random_instance(seed);
            let r = voc_ap(&dets, &gts, 2, 0.5);
            for ap in r.per_class.iter().flatten() {
                prop_assert!((0.0..=1.0).contains(ap));
            }
            let rescaled: Vec<Vec<Detection>> = dets
                .iter()
                .map(|ds| ds.iter().map(|d| Detection { score: (3.0 * d.score).exp() - 7.0, ..*d }).collect())
                .collect();
            prop_assert_eq!(voc_ap(&rescaled, &gts, 2, 0.5), r);
        }

        #[test]
        fn averaged_ap_never_exceeds_ap50(seed in 0u64..2000) {
            let (dets, gts) = random_instance(seed);
            let r = coco_ap(&dets, &gts, 2, 96, AreaBins::scaled_for(96));
            if let (Some(avg), Some(a50)) = (r.ap_50_95, r.map50) {
                prop_assert!(avg <= a50 + 1e-12);
            }
        }

        #[test]
        fn duplicate_of_matched_detection_cannot_raise_ap(seed in 0u64..2000, dup_score in 0.0f64..1.0) {
            let (mut dets, gts) = random_instance(seed);
            let before = voc_ap(&dets, &gts, 2, 0.5);
            // Duplicate the top-ranked detection of class 0 if it is a TP.
            let (outcomes, _) = match_class(&dets, &gts, 0, 0.5, None);
            let order = ranked(&dets, 0);
            if let (Some(Some(true)), Some(&(img, _, _, bbox))) = (outcomes.first(), order.first()) {
                // Only when the image's gts are pairwise disjoint can the copy not take another gt.
                let disjoint = gts[img].iter().enumerate().all(|(i, a)| gts[img].iter().skip(i + 1).all(|b| iou(&a.bbox, &b.bbox) == 0.0));
                if disjoint {
                    dets[img].push(Detection { class_id: 0, score: dup_score, bbox });
                    let after = voc_ap(&dets, &gts, 2, 0.5);
                    prop_assert!(after.per_class[0].unwrap() <= before.per_class[0].unwrap());
                }
            }
        }
    }
}
