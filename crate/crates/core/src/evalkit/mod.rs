//! VOC and COCO style average precision, plus the analyses that compare
//! models across distortion families and levels.

mod analysis;
mod ap;
mod dump;

pub use analysis::{
    cross_distortion_matrix, detect_set, distort_all_levels, distort_random, evaluate_set, loss_decomposition, map50,
    per_level_sweep, CrossMatrix, LossBreakdown,
};
pub use ap::{coco_ap, coco_thresholds, voc_ap, APReport, AreaBins, VocResult};
pub use dump::{read_detections, write_detections, DetectionRecord};
pub use crate::geometry::{iou, iou_corners};
