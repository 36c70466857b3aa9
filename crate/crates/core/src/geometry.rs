//! Axis-aligned bounding boxes in image pixel coordinates.
//!
//! Origin is the top-left corner, x grows right and y grows down. Boxes are
//! real-valued and always have strictly positive area.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// A point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box `[x_min, x_max] x [y_min, y_max]`.
///
/// Construction through [`BoundingBox::new`] guarantees finite coordinates
/// and `x_min < x_max`, `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(coords));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(GeometryError::EmptyBox(coords));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Box from center and size.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Area of the intersection; zero when the boxes do not overlap with
    /// positive area.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Fraction of this box covered by `other`.
    pub fn covered_fraction(&self, other: &BoundingBox) -> f64 {
        self.intersection_area(other) / self.area()
    }

    /// Smallest box containing both.
    pub fn union_box(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Non-strict containment of `other` inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// `other` lies in the open interior of `self`.
    pub fn strictly_contains(&self, other: &BoundingBox) -> bool {
        self.x_min < other.x_min
            && self.y_min < other.y_min
            && self.x_max > other.x_max
            && self.y_max > other.y_max
    }

    /// Clamp to `[0, width] x [0, height]`. Fails when nothing with positive
    /// area remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Result<BoundingBox, GeometryError> {
        BoundingBox::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Multiply every coordinate by `s > 0`.
    pub fn scale(&self, s: f64) -> BoundingBox {
        assert!(s > 0.0 && s.is_finite(), "scale factor must be positive");
        BoundingBox {
            x_min: self.x_min * s,
            y_min: self.y_min * s,
            x_max: self.x_max * s,
            y_max: self.y_max * s,
        }
    }

    /// Grow outward by `margin` on every side.
    pub fn inflate(&self, margin: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min - margin,
            y_min: self.y_min - margin,
            x_max: self.x_max + margin,
            y_max: self.y_max + margin,
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        BoundingBox::try_from(c).map_err(serde::de::Error::custom)
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

pub fn center(b: &BoundingBox) -> Point {
    b.center()
}

/// Euclidean distance between box centers.
pub fn displacement(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.center().distance(&b.center())
}

pub fn union_box(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    a.union_box(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Counts unit pixels covered by integer boxes. Independent of the
    /// analytic path.
    fn pixel_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
        let inside = |r: [i32; 4], x: i32, y: i32| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
        let (mut inter, mut union) = (0u32, 0u32);
        for y in 0..64 {
            for x in 0..64 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as u32;
                union += (ia || ib) as u32;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        let expected = pixel_iou([0, 0, 10, 10], [5, 0, 15, 10]);
        assert!((expected - 1.0 / 3.0).abs() < 1e-15);
        assert!((iou(&a, &bb(5.0, 0.0, 15.0, 10.0)) - expected).abs() < 1e-12);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &bb(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert_eq!(iou(&a, &bb(10.0, 10.0, 20.0, 20.0)), 0.0);
    }

    #[test]
    fn center_examples() {
        assert_eq!(center(&bb(0.0, 0.0, 10.0, 10.0)), Point::new(5.0, 5.0));
        assert_eq!(center(&bb(2.0, 4.0, 2.5, 6.0)), Point::new(2.25, 5.0));
        assert_eq!(center(&bb(0.0, 0.0, 640.0, 480.0)), Point::new(320.0, 240.0));
    }

    #[test]
    fn displacement_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(30.0, 40.0, 40.0, 50.0);
        assert_eq!(displacement(&a, &a), 0.0);
        assert_eq!(displacement(&a, &b), 50.0);
        assert_eq!(displacement(&b, &a), 50.0);
    }

    #[test]
    fn union_box_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(union_box(&a, &bb(5.0, 5.0, 20.0, 20.0)), bb(0.0, 0.0, 20.0, 20.0));
        assert_eq!(union_box(&a, &a), a);
        assert_eq!(
            union_box(&bb(0.0, 0.0, 1.0, 1.0), &bb(9.0, 9.0, 10.0, 10.0)),
            bb(0.0, 0.0, 10.0, 10.0)
        );
    }

    #[test]
    fn construction_rejects_invalid() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::new(3.0, 0.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 5.0).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[0,0,0,1]").is_err());
    }

    #[test]
    fn clamp_to_image() {
        let b = bb(-10.0, 5.0, 30.0, 500.0).clamp_to(20.0, 480.0).unwrap();
        assert_eq!(b, bb(0.0, 5.0, 20.0, 480.0));
        assert!(bb(700.0, 0.0, 710.0, 10.0).clamp_to(640.0, 480.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..80.0f64, 0.5..80.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    fn arb_grid_box() -> impl Strategy<Value = [i32; 4]> {
        (0..63i32, 0..63i32)
            .prop_flat_map(|(x, y)| (Just(x), Just(y), x + 1..=64, y + 1..=64))
            .prop_map(|(x0, y0, x1, y1)| [x0, y0, x1, y1])
    }

    proptest! {
        #[test]
        fn iou_matches_pixel_oracle(a in arb_grid_box(), b in arb_grid_box()) {
            let fa = bb(a[0] as f64, a[1] as f64, a[2] as f64, a[3] as f64);
            let fb = bb(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64);
            prop_assert!((iou(&fa, &fb) - pixel_iou(a, b)).abs() < 1e-12);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let v = iou(&a, &b);
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(iou(&a, &a), 1.0);
            prop_assert_eq!(v > 0.0, a.intersection_area(&b) > 0.0);
        }

        #[test]
        fn union_box_contains_commutes_idempotent(a in arb_box(), b in arb_box()) {
            let u = union_box(&a, &b);
            prop_assert!(u.contains(&a) && u.contains(&b));
            prop_assert_eq!(u, union_box(&b, &a));
            prop_assert_eq!(union_box(&u, &u), u);
            prop_assert_eq!(union_box(&u, &a), u);
        }

        #[test]
        fn displacement_triangle_inequality(a in arb_box(), b in arb_box(), c in arb_box()) {
            let ab = displacement(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, displacement(&b, &a));
            prop_assert!(displacement(&a, &c) <= ab + displacement(&b, &c) + 1e-9);
        }
    }
}
