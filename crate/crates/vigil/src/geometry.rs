//! Box geometry shared by every stage: axis-aligned bounding boxes, IoU,
//! greedy non-maximum suppression, and the mapping between detector boxes
//! and the measurement vector tracked by the motion filter.

use thiserror::Error;

use crate::appearance::Descriptor;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// Box dimensions must be finite and strictly positive.
    #[error("invalid box: w={w}, h={h} (dimensions must be finite and > 0)")]
    InvalidBox { w: f64, h: f64 },
    /// Detector confidence lives in [0, 1].
    #[error("invalid confidence {0} (must lie in [0, 1])")]
    InvalidConfidence(f64),
}

/// Axis-aligned bounding box in pixel coordinates, `(x, y)` top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Validates that `w` and `h` are finite and strictly positive.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let dims_ok = w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0;
        if !dims_ok || !x.is_finite() || !y.is_finite() {
            return Err(GeometryError::InvalidBox { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Center-based measurement vector: center x, center y, aspect ratio
    /// w/h, and height. This is the coordinate frame the Kalman filter
    /// operates in.
    pub fn to_observation(&self) -> Observation {
        Observation {
            u: self.x + self.w / 2.0,
            v: self.y + self.h / 2.0,
            gamma: self.w / self.h,
            h: self.h,
        }
    }
}

/// Measurement vector (u, v, γ, h): box center, aspect ratio, height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub u: f64,
    pub v: f64,
    pub gamma: f64,
    pub h: f64,
}

impl Observation {
    /// Inverse of [`BoundingBox::to_observation`].
    pub fn to_bounding_box(&self) -> BoundingBox {
        let w = self.gamma * self.h;
        BoundingBox {
            x: self.u - w / 2.0,
            y: self.v - self.h / 2.0,
            w,
            h: self.h,
        }
    }

    /// Euclidean distance between box centers, ignoring shape.
    pub fn center_distance(&self, other: &Observation) -> f64 {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        (du * du + dv * dv).sqrt()
    }
}

/// One detector output: frame index, box, confidence, and (once attached)
/// the appearance descriptor used during association.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub descriptor: Option<Descriptor>,
}

impl Detection {
    pub fn new(
        frame: u64,
        bbox: BoundingBox,
        confidence: f64,
        descriptor: Option<Descriptor>,
    ) -> Result<Self, GeometryError> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::InvalidConfidence(confidence));
        }
        Ok(Self {
            frame,
            bbox,
            confidence,
            descriptor,
        })
    }
}

/// Intersection-over-union of two boxes. Always in [0, 1]; 1 for identical
/// boxes, 0 for disjoint ones.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited in confidence-descending order (ties broken by lower
/// input index); each kept box suppresses every remaining box whose IoU
/// with it strictly exceeds `overlap_threshold`. The survivors come back in
/// visit order, i.e. confidence-descending.
///
/// A threshold of 1.0 keeps everything: IoU never exceeds 1.
pub fn nms(detections: &[Detection], overlap_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    // Stable sort keeps the lower original index first on equal confidence.
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .partial_cmp(&detections[a].confidence)
            .expect("confidence is finite by construction")
    });

    let mut suppressed = vec![false; detections.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(detections[i].clone());
        for &j in &order[rank + 1..] {
            if !suppressed[j] && iou(&detections[i].bbox, &detections[j].bbox) > overlap_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(bbox: BoundingBox, confidence: f64) -> Detection {
        Detection::new(0, bbox, confidence, None).unwrap()
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let a = bb(3.0, 4.0, 10.0, 20.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = bb(0.0, 0.0, 5.0, 5.0);
        let b = bb(10.0, 10.0, 5.0, 5.0);
        assert_eq!(iou(&a, &b), 0.0);
        // Boxes sharing only an edge are still disjoint in area terms.
        let c = bb(5.0, 0.0, 5.0, 5.0);
        assert_eq!(iou(&a, &c), 0.0);
    }

    #[test]
    fn iou_half_overlapping_unit_boxes() {
        // Unit boxes offset by half a side: intersection 0.5, union 1.5.
        let a = bb(0.0, 0.0, 1.0, 1.0);
        let b = bb(0.5, 0.0, 1.0, 1.0);
        let expected = 0.5 / 1.5;
        assert!((iou(&a, &b) - expected).abs() < 1e-12);
        assert!((iou(&b, &a) - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BoundingBox::new(f64::INFINITY, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn confidence_out_of_range_is_rejected() {
        let b = bb(0.0, 0.0, 1.0, 1.0);
        assert!(Detection::new(0, b, 1.2, None).is_err());
        assert!(Detection::new(0, b, -0.1, None).is_err());
        assert!(Detection::new(0, b, f64::NAN, None).is_err());
    }

    #[test]
    fn observation_mapping_matches_definition() {
        let b = bb(10.0, 20.0, 8.0, 16.0);
        let o = b.to_observation();
        assert_eq!(o.u, 14.0);
        assert_eq!(o.v, 28.0);
        assert_eq!(o.gamma, 0.5);
        assert_eq!(o.h, 16.0);
    }

    #[test]
    fn observation_round_trip_is_tight() {
        let b = bb(3.25, -7.5, 11.0, 40.0);
        let r = b.to_observation().to_bounding_box();
        for (got, want) in [(r.x, b.x), (r.y, b.y), (r.w, b.w), (r.h, b.h)] {
            let rel = (got - want).abs() / want.abs().max(1.0);
            assert!(rel <= 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn nms_suppresses_high_overlap_keeping_confidence_winner() {
        let a = det(bb(0.0, 0.0, 10.0, 10.0), 0.9);
        let b = det(bb(1.0, 1.0, 10.0, 10.0), 0.8); // heavy overlap with a
        let c = det(bb(50.0, 50.0, 10.0, 10.0), 0.5); // far away
        let kept = nms(&[b.clone(), a.clone(), c.clone()], 0.3);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].confidence, 0.9);
        assert_eq!(kept[1].confidence, 0.5);
    }

    #[test]
    fn nms_threshold_one_keeps_everything() {
        let a = det(bb(0.0, 0.0, 10.0, 10.0), 0.9);
        let b = det(bb(0.0, 0.0, 10.0, 10.0), 0.1);
        let kept = nms(&[a, b], 1.0);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn nms_equal_confidence_keeps_lower_input_index() {
        // Identical boxes, identical confidence: the earlier one survives.
        let a = det(bb(0.0, 0.0, 10.0, 10.0), 0.7);
        let b = det(bb(0.5, 0.0, 10.0, 10.0), 0.7);
        let kept = nms(&[a.clone(), b], 0.3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox, a.bbox);
    }

    #[test]
    fn nms_empty_input_is_empty() {
        assert!(nms(&[], 0.5).is_empty());
    }
}
