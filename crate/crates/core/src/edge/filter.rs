use crate::geometry::iou;
use crate::types::Detection;

/// Confidence threshold followed by greedy non-maximum suppression.
///
/// Survivors are returned in descending confidence order (ties keep input order).
pub fn filter_detections(dets: &[Detection], conf_thresh: f64, nms_iou: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= conf_thresh && dets[i].bbox.is_valid())
        .collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });

    let mut keep: Vec<Detection> = Vec::with_capacity(order.len());
    for i in order {
        if keep.iter().all(|k| iou(&k.bbox, &dets[i].bbox) <= nms_iou) {
            keep.push(dets[i]);
        }
    }
    keep
}
