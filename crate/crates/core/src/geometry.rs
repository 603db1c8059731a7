//! Axis-aligned box geometry: the ground-truth box type and the IoU /
//! generalized-IoU overlap measures.

use crate::error::{Error, Result};

/// Axis-aligned box stored in center form `(cx, cy, w, h)`, in image pixels.
///
/// Center form is the storage layout because every Gaussian construction
/// consumes `(center, half-extent)` directly; the corner form is a view.
/// Boxes with non-positive or non-finite extent are rejected at
/// construction, so downstream divisions by `w²` and logarithms of `h`
/// are safe everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBBox(format!(
                "non-finite field in ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBBox(format!(
                "width and height must be > 0, got w={w}, h={h}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corner form `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Corner view `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = 0.5 * self.w;
        let hh = 0.5 * self.h;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Longest side, the scale used for level grouping and histogram binning.
    pub fn scale(&self) -> f64 {
        self.w.max(self.h)
    }

    /// True when `(x, y)` lies inside the box, boundary included.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x1, y1, x2, y2) = self.corners();
        x >= x1 && x <= x2 && y >= y1 && y <= y2
    }
}

/// Area of the ground-truth box; the key of the smaller-box-wins
/// conflict rule used by every assigner in this crate.
pub fn bbox_area(b: BBox) -> f64 {
    b.area()
}

/// Intersection over union of two boxes, 0 when disjoint.
pub fn iou(a: BBox, b: BBox) -> f64 {
    let (inter, union, _) = overlap_terms(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Generalized IoU: `iou - (enclosure - union) / enclosure`, in `(-1, 1]`.
///
/// Unlike plain IoU it stays informative for disjoint boxes, decaying
/// towards -1 as the empty space between them grows.
pub fn giou(a: BBox, b: BBox) -> f64 {
    let (inter, union, enclosure) = overlap_terms(a, b);
    inter / union - (enclosure - union) / enclosure
}

/// Intersection, union and enclosing-box areas. All three derive from the
/// same corner-space side lengths, so coincident boxes give
/// `inter == union == enclosure` exactly and IoU stays within `[0, 1]`.
fn overlap_terms(a: BBox, b: BBox) -> (f64, f64, f64) {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    let inter = if iw <= 0.0 || ih <= 0.0 { 0.0 } else { iw * ih };
    let union = area_a + area_b - inter;
    let enclosure = (ax2.max(bx2) - ax1.min(bx1)) * (ay2.max(by2) - ay1.min(by1));
    (inter, union, enclosure)
}
