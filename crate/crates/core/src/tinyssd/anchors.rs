use crate::geometry::BoxCoords;

/// Default boxes in head-output order: fine grid first, then coarse; within
/// a grid row-major cells, and within a cell one anchor per aspect ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pub boxes: Vec<BoxCoords>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// One anchor per (grid cell, aspect ratio). An anchor with ratio `r` and
/// scale `s` has `w = s·√r`, `h = s/√r`; `scales[i]` pairs with `grid_sizes[i]`.
pub fn build_anchors(grid_sizes: &[usize], aspect_ratios: &[f64], scales: &[f64]) -> AnchorSet {
    assert!(!grid_sizes.is_empty() && !aspect_ratios.is_empty());
    assert_eq!(grid_sizes.len(), scales.len());
    let mut boxes = Vec::new();
    for (&g, &s) in grid_sizes.iter().zip(scales) {
        for y in 0..g {
            for x in 0..g {
                let cx = (x as f64 + 0.5) / g as f64;
                let cy = (y as f64 + 0.5) / g as f64;
                for &r in aspect_ratios {
                    let sr = r.sqrt();
                    boxes.push(BoxCoords::new(cx, cy, s * sr, s / sr));
                }
            }
        }
    }
    AnchorSet { boxes }
}

impl super::ArchConfig {
    pub fn anchors(&self) -> AnchorSet {
        build_anchors(&self.grids(), &self.aspect_ratios, &self.anchor_scales)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::geometry::iou;
    use crate::rng::rng_from;
    use crate::synthkit::{render_scene, SceneSpec};
    use crate::tinyssd::ArchConfig;

    #[test]
    fn default_count_is_540() {
        let a = build_anchors(&[12, 6], &[1.0, 2.0, 0.5], &[0.33, 0.56]);
        assert_eq!(a.len(), 12 * 12 * 3 + 6 * 6 * 3);
        assert_eq!(ArchConfig::default().anchors(), a);
    }

    #[test]
    fn unit_ratio_anchors_are_square() {
        let a = build_anchors(&[4], &[1.0], &[0.3]);
        assert!(a.boxes.iter().all(|b| b.w == b.h));
    }

    #[test]
    fn rendered_scene_boxes_covered() {
        let anchors = ArchConfig::default().anchors();
        let spec = SceneSpec::default();
        for seed in 0..300 {
            for l in render_scene(&spec, seed).unwrap().1 {
                let best = anchors.boxes.iter().map(|a| iou(a, &l.bbox)).fold(0.0, f64::max);
                assert!(best >= 0.5, "seed {seed}: {best}");
            }
        }
    }

    /// Monte-Carlo over the scene box distribution: side in [24, 48] px,
    /// aspect within 1.25, anywhere inside the image.
    #[test]
    fn monte_carlo_coverage() {
        let anchors = ArchConfig::default().anchors();
        let spec = SceneSpec::default();
        let (lo, hi) = (spec.min_object_side as f64 / 96.0, spec.max_object_side as f64 / 96.0);
        let mut rng = rng_from(2024);
        for _ in 0..10_000 {
            let w: f64 = rng.random_range(lo..=hi);
            let h: f64 = rng.random_range(lo..=hi);
            if w / h > spec.max_aspect || h / w > spec.max_aspect {
                continue;
            }
            let b = BoxCoords::new(rng.random_range(w / 2.0..=1.0 - w / 2.0), rng.random_range(h / 2.0..=1.0 - h / 2.0), w, h);
            let best = anchors.boxes.iter().map(|a| iou(a, &b)).fold(0.0, f64::max);
            assert!(best >= 0.5, "{b:?}: {best}");
        }
    }
}
