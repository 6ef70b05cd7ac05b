use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::encode::EncodedTargets;
use super::net::DetectionOutput;
use super::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the box-regression term.
    pub alpha: f64,
    /// Mined negatives per positive.
    pub neg_pos_ratio: usize,
    /// Floor on the per-image positive count used to size negative mining
    /// for images without ground truth.
    pub empty_image_min_positives: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            neg_pos_ratio: 3,
            empty_image_min_positives: 4,
        }
    }
}

/// Loss components over a batch. `class_sum` and `bb_sum` are the raw sums;
/// `total = (class_sum + α·bb_sum) / n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub class_sum: f64,
    pub bb_sum: f64,
    /// Positives plus mined negatives.
    pub n: usize,
    pub total: f64,
}

impl LossParts {
    pub fn class_mean(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.class_sum / self.n as f64 }
    }

    pub fn bb_mean(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.bb_sum / self.n as f64 }
    }
}

pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 { 0.5 * d * d } else { d.abs() - 0.5 }
}

fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 { d } else { d.signum() }
}

/// Log-softmax of one logit row, computed in f64.
fn log_softmax<T: Real>(row: ndarray::ArrayView1<T>) -> Vec<f64> {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v.as_f64() - lse).collect()
}

/// Anchor indices of the hardest negatives: background anchors ranked by
/// background cross-entropy, ties broken by lower anchor index.
fn mine_negatives<T: Real>(logits: &Array2<T>, targets: &EncodedTargets, count: usize) -> Vec<usize> {
    let mut neg: Vec<(f64, usize)> = (0..targets.labels.len())
        .filter(|&i| !targets.mask[i])
        .map(|i| (-log_softmax(logits.row(i))[0], i))
        .collect();
    neg.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    neg.truncate(count);
    neg.into_iter().map(|(_, i)| i).collect()
}

/// Detection loss of a batch with its gradient w.r.t. each head output.
///
/// Classification is cross-entropy over positives plus `neg_pos_ratio`
/// hardest negatives per image; box regression is smooth-L1 over the four
/// offsets of positive anchors. Both are summed over the batch and divided
/// by the total number of selected anchors.
pub fn detection_loss_with_grad<T: Real>(
    outputs: &[&DetectionOutput<T>],
    targets: &[&EncodedTargets],
    cfg: &LossConfig,
) -> (LossParts, Vec<DetectionOutput<T>>) {
    assert_eq!(outputs.len(), targets.len(), "batch mismatch");
    let total_pos: usize = targets.iter().map(|t| t.num_positives()).sum();
    let mean_pos = if targets.is_empty() {
        0.0
    } else {
        total_pos as f64 / targets.len() as f64
    };
    let empty_count = cfg.neg_pos_ratio * (mean_pos.ceil() as usize).max(cfg.empty_image_min_positives);

    // Selection first: N is needed to scale gradients.
    let selections: Vec<(Vec<usize>, Vec<usize>)> = outputs
        .iter()
        .zip(targets)
        .map(|(out, t)| {
            assert_eq!(out.num_anchors(), t.labels.len(), "anchor count mismatch");
            let pos: Vec<usize> = (0..t.labels.len()).filter(|&i| t.mask[i]).collect();
            let want = if pos.is_empty() { empty_count } else { cfg.neg_pos_ratio * pos.len() };
            let neg = mine_negatives(&out.class_logits, t, want);
            (pos, neg)
        })
        .collect();
    let n: usize = selections.iter().map(|(p, q)| p.len() + q.len()).sum();
    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };

    let mut class_sum = 0.0;
    let mut bb_sum = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for ((out, t), (pos, neg)) in outputs.iter().zip(targets).zip(&selections) {
        let mut g = DetectionOutput::<T>::zeros(out.num_anchors(), out.class_logits.ncols());
        for &i in pos.iter().chain(neg) {
            let ls = log_softmax(out.class_logits.row(i));
            let label = t.labels[i];
            class_sum -= ls[label];
            for (k, l) in ls.iter().enumerate() {
                let onehot = if k == label { 1.0 } else { 0.0 };
                g.class_logits[[i, k]] = T::lit((l.exp() - onehot) * inv_n);
            }
        }
        for &i in pos {
            for k in 0..4 {
                let d = out.box_offsets[[i, k]].as_f64() - t.offsets[i][k];
                bb_sum += smooth_l1(d);
                g.box_offsets[[i, k]] = T::lit(cfg.alpha * smooth_l1_grad(d) * inv_n);
            }
        }
        grads.push(g);
    }
    let parts = LossParts {
        class_sum,
        bb_sum,
        n,
        total: (class_sum + cfg.alpha * bb_sum) * inv_n,
    };
    (parts, grads)
}

/// Single-image detection loss.
pub fn detection_loss<T: Real>(output: &DetectionOutput<T>, targets: &EncodedTargets, cfg: &LossConfig) -> LossParts {
    detection_loss_with_grad(&[output], &[targets], cfg).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxCoords;
    use crate::synthkit::BoxLabel;
    use crate::tinyssd::{encode_targets, ArchConfig};

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
    }

    fn two_positive_targets(n: usize) -> EncodedTargets {
        let mut t = EncodedTargets {
            labels: vec![0; n],
            offsets: vec![[0.0; 4]; n],
            mask: vec![false; n],
        };
        t.labels[1] = 1;
        t.mask[1] = true;
        t.labels[5] = 3;
        t.mask[5] = true;
        t.offsets[5] = [0.1, -0.2, 0.3, 0.0];
        t
    }

    #[test]
    fn uniform_logits_give_ln4() {
        let t = two_positive_targets(20);
        let out = DetectionOutput::<f64>::zeros(20, 4);
        let parts = detection_loss(&out, &t, &LossConfig::default());
        assert_eq!(parts.n, 8);
        assert!((parts.class_mean() - 4f64.ln()).abs() < 1e-12);
        assert!((parts.class_mean() - 1.386).abs() < 1e-3);
    }

    #[test]
    fn saturated_prediction_has_near_zero_loss() {
        let t = two_positive_targets(20);
        let mut out = DetectionOutput::<f64>::zeros(20, 4);
        for i in 0..20 {
            out.class_logits[[i, t.labels[i]]] = 20.0;
            for k in 0..4 {
                out.box_offsets[[i, k]] = t.offsets[i][k];
            }
        }
        let parts = detection_loss(&out, &t, &LossConfig::default());
        assert_eq!(parts.bb_sum, 0.0);
        assert!(parts.class_sum < 1e-6);
        assert!(parts.total >= 0.0);
    }

    #[test]
    fn alpha_scales_box_term_linearly() {
        let t = two_positive_targets(20);
        let out = DetectionOutput::<f64>::zeros(20, 4);
        let one = detection_loss(&out, &t, &LossConfig { alpha: 1.0, ..Default::default() });
        let two = detection_loss(&out, &t, &LossConfig { alpha: 2.0, ..Default::default() });
        let bb = one.bb_sum / one.n as f64;
        assert!(bb > 0.0);
        assert!(((two.total - one.total) - bb).abs() < 1e-12);
    }

    #[test]
    fn hard_negatives_ranked_with_index_tiebreak() {
        let t = two_positive_targets(20);
        let mut out = DetectionOutput::<f64>::zeros(20, 4);
        // Anchor 9 is the hardest negative; the rest tie and resolve by index.
        out.class_logits[[9, 2]] = 5.0;
        let sel = mine_negatives(&out.class_logits, &t, 6);
        assert_eq!(sel, vec![9, 0, 2, 3, 4, 6]);
    }

    #[test]
    fn empty_image_keeps_negatives() {
        let arch = ArchConfig::default();
        let anchors = arch.anchors();
        let empty = encode_targets(&[], &anchors, 0.5);
        let out = DetectionOutput::<f64>::zeros(anchors.len(), 4);
        let parts = detection_loss(&out, &empty, &LossConfig::default());
        assert_eq!(parts.bb_sum, 0.0);
        assert_eq!(parts.n, 12);
        // Batch with one labeled image (k positives) and one empty image.
        let labeled = encode_targets(
            &[BoxLabel { class_id: 0, bbox: BoxCoords::new(0.5, 0.5, 0.4, 0.4) }],
            &anchors,
            0.5,
        );
        let (parts, _) = detection_loss_with_grad(&[&out, &out], &[&labeled, &empty], &LossConfig::default());
        let k = labeled.num_positives();
        let mean = (k as f64 / 2.0).ceil() as usize;
        assert_eq!(parts.n, 4 * k + 3 * mean.max(4));
    }

    #[test]
    fn loss_non_negative() {
        let t = two_positive_targets(30);
        let out = DetectionOutput::<f64> {
            class_logits: Array2::from_shape_fn((30, 4), |(i, k)| ((i * 7 + k * 3) % 11) as f64 - 5.0),
            box_offsets: Array2::from_shape_fn((30, 4), |(i, k)| ((i + k) % 5) as f64 - 2.0),
        };
        assert!(detection_loss(&out, &t, &LossConfig::default()).total >= 0.0);
    }
}
