//! Regression-target geometry: signed point-to-side distances and the
//! outside-tolerant centerness used when points may regress boxes they do
//! not sit inside.

use crate::assignment::FeaturePoint;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Default stabilizer for [`centerness_star`].
pub const DEFAULT_CENTERNESS_C: f64 = 0.01;

/// Signed distances from a point to the four box sides; negative values
/// mean the point lies outside on that side. For targets produced by
/// [`ltrb`], `l + r` equals the box width and `t + b` its height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtrbTarget {
    pub l: f64,
    pub t: f64,
    pub r: f64,
    pub b: f64,
}

/// Distances from a feature point to the sides of a gt box.
pub fn ltrb(p: &FeaturePoint, g: BBox) -> LtrbTarget {
    let (x1, y1, x2, y2) = g.corners();
    LtrbTarget {
        l: p.px - x1,
        t: p.py - y1,
        r: x2 - p.px,
        b: y2 - p.py,
    }
}

/// Centerness with an outside-the-box escape hatch:
///
/// ```text
/// sqrt( (step(min(l,r)) * min(l,r) + c) / max(l,r)
///     * (step(min(t,b)) * min(t,b) + c) / max(t,b) )
/// ```
///
/// where `step(x)` is 1 for x > 0 and 0 otherwise (including exactly 0).
/// The `c` term keeps the value strictly positive when the point sits
/// outside the box, where plain centerness would hit zero. For interior
/// points the value tends to the plain centerness as `c -> 0`.
///
/// Requires `max(l, r) > 0` and `max(t, b) > 0`; a point beyond both
/// opposing sides on an axis has no meaningful centerness and is an error.
pub fn centerness_star(tgt: &LtrbTarget, c: f64) -> Result<f64> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidTarget(format!(
            "c must be finite and >= 0, got {c}"
        )));
    }
    let max_lr = tgt.l.max(tgt.r);
    let max_tb = tgt.t.max(tgt.b);
    if !(max_lr > 0.0 && max_tb > 0.0) {
        return Err(Error::InvalidTarget(format!(
            "point lies fully outside on an axis: max(l,r)={max_lr}, max(t,b)={max_tb}"
        )));
    }
    let min_lr = tgt.l.min(tgt.r);
    let min_tb = tgt.t.min(tgt.b);
    let horiz = (step(min_lr) * min_lr + c) / max_lr;
    let vert = (step(min_tb) * min_tb + c) / max_tb;
    Ok((horiz * vert).sqrt())
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}
