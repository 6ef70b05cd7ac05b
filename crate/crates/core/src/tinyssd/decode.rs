use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::encode::decode_box;
use super::net::DetectionOutput;
use super::Real;
use crate::geometry::{iou, BoxCoords};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    pub bbox: BoxCoords,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub max_dets: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.05,
            nms_iou: 0.45,
            max_dets: 100,
        }
    }
}

/// Greedy NMS over `(box, score)` candidates. Candidates are visited by
/// descending score, ties by lower index; a candidate is dropped when its
/// IoU with an already kept box exceeds `iou_threshold`. Returns kept
/// indices in visit order.
pub fn nms(candidates: &[(BoxCoords, f64)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou(&candidates[k].0, &candidates[i].0) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Per-class thresholding and NMS, then the top `max_dets` overall by score.
pub fn decode_detections<T: Real>(output: &DetectionOutput<T>, anchors: &AnchorSet, cfg: &DecodeConfig) -> Vec<Detection> {
    let n = output.num_anchors();
    assert_eq!(n, anchors.len(), "anchor count mismatch");
    let k = output.class_logits.ncols();
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = output.class_logits.row(i);
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect();

    // (score, class, anchor) so the final sort has a total order.
    let mut all: Vec<(Detection, usize)> = Vec::new();
    for c in 1..k {
        let mut cands = Vec::new();
        let mut anchor_of = Vec::new();
        for (i, p) in probs.iter().enumerate() {
            if p[c] >= cfg.conf_threshold {
                let t = [0, 1, 2, 3].map(|j| output.box_offsets[[i, j]].as_f64());
                cands.push((decode_box(t, &anchors.boxes[i]).clipped(), p[c]));
                anchor_of.push(i);
            }
        }
        for idx in nms(&cands, cfg.nms_iou) {
            all.push((
                Detection {
                    class_id: c - 1,
                    score: cands[idx].1,
                    bbox: cands[idx].0,
                },
                anchor_of[idx],
            ));
        }
    }
    all.sort_by(|a, b| {
        b.0.score
            .total_cmp(&a.0.score)
            .then(a.0.class_id.cmp(&b.0.class_id))
            .then(a.1.cmp(&b.1))
    });
    all.truncate(cfg.max_dets);
    all.into_iter().map(|(d, _)| d).collect()
}
