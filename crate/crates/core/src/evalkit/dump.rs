use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BoxCoords;
use crate::tinyssd::Detection;

/// One detection as a JSONL record, box in normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub class_id: usize,
    pub score: f64,
    pub bbox: BoxCoords,
}

pub fn write_detections(keys: &[String], dets: &[Vec<Detection>]) -> String {
    let mut out = String::new();
    for (key, ds) in keys.iter().zip(dets) {
        for d in ds {
            let rec = DetectionRecord {
                image: key.clone(),
                class_id: d.class_id,
                score: d.score,
                bbox: d.bbox,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn read_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let d = Detection {
            class_id: 2,
            score: 0.75,
            bbox: BoxCoords::new(0.1, 0.2, 0.3, 0.4),
        };
        let text = write_detections(&["test/0".into(), "test/1".into()], &[vec![d], vec![d, d]]);
        let back = read_detections(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].image, "test/1");
        assert_eq!((back[0].class_id, back[0].score, back[0].bbox), (2, 0.75, d.bbox));
    }
}
