use super::anchors::AnchorSet;
use crate::geometry::{iou, BoxCoords};
use crate::synthkit::BoxLabel;

/// Per-anchor matching result. `labels[i]` is 0 for background and
/// `class_id + 1` for a matched anchor; `offsets[i]` is meaningful only
/// where `mask[i]` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTargets {
    pub labels: Vec<usize>,
    pub offsets: Vec<[f64; 4]>,
    pub mask: Vec<bool>,
}

impl EncodedTargets {
    pub fn num_positives(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `((cx - ax)/aw, (cy - ay)/ah, ln(w/aw), ln(h/ah))`
pub fn encode_box(b: &BoxCoords, a: &BoxCoords) -> [f64; 4] {
    [
        (b.cx - a.cx) / a.w,
        (b.cy - a.cy) / a.h,
        (b.w / a.w).ln(),
        (b.h / a.h).ln(),
    ]
}

pub fn decode_box(t: [f64; 4], a: &BoxCoords) -> BoxCoords {
    BoxCoords::new(a.cx + t[0] * a.w, a.cy + t[1] * a.h, a.w * t[2].exp(), a.h * t[3].exp())
}

/// Matches every ground-truth box to its best anchor unconditionally, plus
/// every anchor whose best ground-truth IoU reaches `iou_threshold`.
pub fn encode_targets(gt: &[BoxLabel], anchors: &AnchorSet, iou_threshold: f64) -> EncodedTargets {
    let n = anchors.len();
    let mut labels = vec![0usize; n];
    let mut offsets = vec![[0.0; 4]; n];
    let mut mask = vec![false; n];
    if gt.is_empty() {
        return EncodedTargets { labels, offsets, mask };
    }
    let overlaps: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| anchors.boxes.iter().map(|a| iou(a, &g.bbox)).collect())
        .collect();
    let mut assigned: Vec<Option<usize>> = (0..n)
        .map(|ai| {
            let (best_g, best) = (0..gt.len())
                .map(|gi| (gi, overlaps[gi][ai]))
                .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            (best >= iou_threshold).then_some(best_g)
        })
        .collect();
    for (gi, row) in overlaps.iter().enumerate() {
        let best_anchor = row
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        assigned[best_anchor] = Some(gi);
    }
    for (ai, g) in assigned.into_iter().enumerate() {
        if let Some(gi) = g {
            labels[ai] = gt[gi].class_id + 1;
            offsets[ai] = encode_box(&gt[gi].bbox, &anchors.boxes[ai]);
            mask[ai] = true;
        }
    }
    EncodedTargets { labels, offsets, mask }
}
