use std::cmp::Ordering;

use super::anchors::AnchorGrid;
use super::boxes::{decode_box, Box3d, BOX_CODE_SIZE};
use super::head::HeadConfig;
use crate::metrics::rotated_iou_bev;
use crate::numerics::sigmoid;

/// A scored box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: Box3d,
    pub class: usize,
    pub score: f64,
    /// Anchor the detection was decoded from; breaks score ties.
    pub anchor: usize,
}

/// Score descending, then anchor index ascending.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.anchor.cmp(&b.anchor))
}

/// Greedy non-maximum suppression within each class: a detection is dropped
/// when its BEV IoU with an already kept detection of the same class
/// exceeds `iou_thresh`. Survivors keep their scores and come out in
/// [`detection_order`].
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class == d.class && rotated_iou_bev(&k.bbox, &d.bbox) > iou_thresh);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Turns raw head outputs into NMS-filtered detections.
pub fn decode_detections(logits: &[f64], deltas: &[f64], anchors: &AnchorGrid, cfg: &HeadConfig) -> Vec<Detection> {
    assert_eq!(logits.len(), anchors.len());
    assert_eq!(deltas.len(), anchors.len() * BOX_CODE_SIZE);
    let mut dets = Vec::new();
    for (i, &z) in logits.iter().enumerate() {
        let score = sigmoid(z);
        if score < cfg.score_threshold {
            continue;
        }
        let code = &deltas[i * BOX_CODE_SIZE..(i + 1) * BOX_CODE_SIZE];
        dets.push(Detection {
            bbox: decode_box(code, anchors.anchor(i)),
            class: anchors.class_of(i),
            score,
            anchor: i,
        });
    }
    let mut kept = nms(&dets, cfg.nms_iou);
    kept.truncate(cfg.max_detections);
    kept
}
