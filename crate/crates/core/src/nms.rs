//! Greedy non-maximum suppression over merged detections.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::iou;
use crate::geometry::PixelBox;

pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("confidence must lie in [0, 1], got {0}")]
    Confidence(f64),
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
}

/// A detected crater. Serialized as
/// `{"class": int, "bbox": [x_min, y_min, x_max, y_max], "conf": float}` with
/// an optional `"window"` index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: PixelBox,
    #[serde(rename = "class")]
    pub class_id: u32,
    #[serde(rename = "conf", deserialize_with = "de_confidence")]
    pub confidence: f64,
    #[serde(rename = "window", default, skip_serializing_if = "Option::is_none")]
    pub source_window: Option<usize>,
}

fn de_confidence<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    check_confidence(v).map_err(serde::de::Error::custom)
}

fn check_confidence(v: f64) -> Result<f64, DetectionError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(DetectionError::Confidence(v))
    }
}

impl Detection {
    pub fn new(bbox: PixelBox, class_id: u32, confidence: f64) -> Result<Self, DetectionError> {
        Ok(Self {
            bbox,
            class_id,
            confidence: check_confidence(confidence)?,
            source_window: None,
        })
    }

    pub fn with_window(mut self, index: usize) -> Self {
        self.source_window = Some(index);
        self
    }
}

/// Total order used before suppression: confidence descending, then
/// `x_min`, `y_min`, class, `x_max`, `y_max`, source window ascending.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.x_min().total_cmp(&b.bbox.x_min()))
        .then_with(|| a.bbox.y_min().total_cmp(&b.bbox.y_min()))
        .then_with(|| a.class_id.cmp(&b.class_id))
        .then_with(|| a.bbox.x_max().total_cmp(&b.bbox.x_max()))
        .then_with(|| a.bbox.y_max().total_cmp(&b.bbox.y_max()))
        .then_with(|| a.source_window.cmp(&b.source_window))
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

pub fn check_threshold(iou_threshold: f64) -> Result<f64, DetectionError> {
    if iou_threshold.is_finite() && iou_threshold > 0.0 && iou_threshold <= 1.0 {
        Ok(iou_threshold)
    } else {
        Err(DetectionError::Threshold(iou_threshold))
    }
}

/// Keep the best detection, drop later ones overlapping a kept detection by
/// more than `iou_threshold` (same class only when `class_aware`). The output
/// is in [`detection_order`] and does not depend on input order.
pub fn nms(
    dets: &[Detection],
    iou_threshold: f64,
    class_aware: bool,
) -> Result<Vec<Detection>, DetectionError> {
    check_threshold(iou_threshold)?;
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for cand in sorted {
        let suppressed = kept.iter().any(|k| {
            (!class_aware || k.class_id == cand.class_id) && iou(&k.bbox, &cand.bbox) > iou_threshold
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, class: u32, conf: f64) -> Detection {
        Detection::new(PixelBox::new(x0, y0, x1, y1).unwrap(), class, conf).unwrap()
    }

    #[test]
    fn keeps_a_and_c() {
        let a = det(0.0, 0.0, 10.0, 10.0, 1, 0.9);
        let b = det(1.0, 1.0, 11.0, 11.0, 1, 0.8);
        let c = det(20.0, 20.0, 30.0, 30.0, 1, 0.7);
        let out = nms(&[b, c, a], 0.5, true).unwrap();
        assert_eq!(out, vec![a, c]);
    }

    #[test]
    fn single_and_empty() {
        let a = det(0.0, 0.0, 10.0, 10.0, 1, 0.9);
        assert_eq!(nms(&[a], 0.5, true).unwrap(), vec![a]);
        assert!(nms(&[], 0.5, true).unwrap().is_empty());
    }

    #[test]
    fn class_isolation() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(0.0, 0.0, 10.0, 10.0, 2, 0.8);
        assert_eq!(nms(&[a, b], 0.5, true).unwrap().len(), 2);
        assert_eq!(nms(&[a, b], 0.5, false).unwrap(), vec![a]);
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 1/7 is not above a 1/7 threshold
        let a = det(0.0, 0.0, 2.0, 2.0, 0, 0.9);
        let b = det(1.0, 1.0, 3.0, 3.0, 0, 0.8);
        assert_eq!(nms(&[a, b], iou(&a.bbox, &b.bbox), true).unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(nms(&[], 0.0, true).is_err());
        assert!(nms(&[], 1.5, true).is_err());
        assert!(Detection::new(PixelBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0, 1.2).is_err());
        assert!(serde_json::from_str::<Detection>(r#"{"class":0,"bbox":[0,0,1,1],"conf":-0.1}"#).is_err());
    }

    #[test]
    fn wire_shape() {
        let d = det(1.0, 2.0, 3.0, 4.0, 2, 0.5).with_window(7);
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"bbox":[1.0,2.0,3.0,4.0],"class":2,"conf":0.5,"window":7}"#
        );
        let back: Detection = serde_json::from_str(r#"{"class":2,"bbox":[1,2,3,4],"conf":0.5}"#).unwrap();
        assert_eq!(back.source_window, None);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec(
            (0.0f64..100.0, 0.0f64..100.0, 1.0f64..40.0, 1.0f64..40.0, 0u32..3, 0u32..5),
            0..60,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, c, q)| det(x, y, x + w, y + h, c, f64::from(q) / 4.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn idempotent_and_order_free(dets in arb_dets(), thr in 0.1f64..=1.0, aware in any::<bool>()) {
            let once = nms(&dets, thr, aware).unwrap();
            prop_assert_eq!(&nms(&once, thr, aware).unwrap(), &once);
            let mut rev = dets.clone();
            rev.reverse();
            prop_assert_eq!(&nms(&rev, thr, aware).unwrap(), &once);
            for (i, a) in once.iter().enumerate() {
                for b in &once[i + 1..] {
                    if !aware || a.class_id == b.class_id {
                        prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                    }
                }
            }
        }
    }
}
