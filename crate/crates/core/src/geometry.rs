//! Bounding boxes, overlap, and local ENU <-> geodetic conversion.

use serde::{Deserialize, Serialize};

/// WGS-84 equatorial radius, used for the local equirectangular approximation.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Axis-aligned box in pixel coordinates, `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        if self.w > 0.0 && self.h > 0.0 {
            self.w * self.h
        } else {
            0.0
        }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Positive size and finite coordinates.
    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    /// Euclidean distance between the two box centers.
    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }
}

/// Intersection over union. Degenerate (zero-area) boxes overlap nothing.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let area_a = a.area();
    let area_b = b.area();
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Offset this origin by local east/north meters.
    pub fn offset_enu(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let lat = self.lat + (north_m / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon + (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        GeoPoint { lat, lon }
    }

    /// Inverse of [`GeoPoint::offset_enu`]: east/north meters of `p` relative to this origin.
    pub fn enu_of(&self, p: &GeoPoint) -> (f64, f64) {
        let north = (p.lat - self.lat).to_radians() * EARTH_RADIUS_M;
        let east = (p.lon - self.lon).to_radians() * EARTH_RADIUS_M * self.lat.to_radians().cos();
        (east, north)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_identity_disjoint_and_half_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boxes_have_zero_iou() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let flat = BBox::new(0.0, 0.0, 10.0, 0.0);
        assert_eq!(iou(&a, &flat), 0.0);
        assert_eq!(iou(&flat, &flat), 0.0);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(10.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn enu_round_trip() {
        let origin = GeoPoint::new(52.52, 13.405);
        let p = origin.offset_enu(123.4, -56.7);
        let (e, n) = origin.enu_of(&p);
        assert!((e - 123.4).abs() < 1e-9);
        assert!((n + 56.7).abs() < 1e-9);
    }

    fn bbox() -> impl Strategy<Value = BBox> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            0.5..300.0f64,
            0.5..300.0f64,
        )
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
