//! Reference assigners embodying the classic box and point priors, plus
//! two hybrid variants: Gaussian-modelled anchors assigned hierarchically
//! and ERF-sized anchors assigned by the IoU threshold rule.
//!
//! These exist to be compared against the receptive-field assigner in the
//! simulation harness; they intentionally keep their conventional
//! behaviors (IoU thresholding, inside-box center sampling with per-level
//! scale ranges).

use crate::assignment::{Assigner, AssignmentResult, FeaturePoint, Label, Stage};
use crate::distances::{gt_gaussian, PriorKernel};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;
use crate::geometry::BBox;
use crate::hla::{hla_assign_prepared, hla_assign_priors, prepare_stages, HlaConfig};
use crate::receptive_field::{build_grid, PyramidSpec};

/// Anchor tiling parameters: one anchor per aspect ratio at every grid
/// center, with area `(base_scale * stride)²` and width/height ratio
/// preserved under the area constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSpec {
    pub base_scale: f64,
    pub ratios: Vec<f64>,
}

impl AnchorSpec {
    pub fn new(base_scale: f64, ratios: Vec<f64>) -> Result<Self> {
        if !(base_scale.is_finite() && base_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "base_scale must be > 0, got {base_scale}"
            )));
        }
        if ratios.is_empty() {
            return Err(Error::InvalidConfig("ratios must be non-empty".into()));
        }
        if !ratios.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ratios must all be > 0, got {ratios:?}"
            )));
        }
        Ok(Self { base_scale, ratios })
    }
}

impl Default for AnchorSpec {
    fn default() -> Self {
        Self {
            base_scale: 8.0,
            ratios: vec![0.5, 1.0, 2.0],
        }
    }
}

/// A tiled anchor: its box, pyramid level and dense id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    pub level: usize,
    pub flat_id: usize,
}

/// IoU-threshold assignment parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxIouConfig {
    /// Anchors whose best IoU reaches this threshold become positive.
    pub pos_thr: f64,
    /// Lower bound of the (unused here) ignore band; kept for fidelity
    /// with the usual two-threshold formulation, must not exceed pos_thr.
    pub neg_thr: f64,
    /// When set, every gt additionally claims its best-IoU anchor even
    /// below the threshold (requires a strictly positive IoU).
    pub low_quality_match: bool,
}

impl MaxIouConfig {
    pub fn new(pos_thr: f64, neg_thr: f64, low_quality_match: bool) -> Result<Self> {
        if !(pos_thr.is_finite() && neg_thr.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        if !(0.0 < neg_thr && neg_thr <= pos_thr && pos_thr <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < neg_thr <= pos_thr <= 1, got neg={neg_thr}, pos={pos_thr}"
            )));
        }
        Ok(Self {
            pos_thr,
            neg_thr,
            low_quality_match,
        })
    }
}

impl Default for MaxIouConfig {
    fn default() -> Self {
        Self {
            pos_thr: 0.5,
            neg_thr: 0.5,
            low_quality_match: false,
        }
    }
}

/// Per-level object-scale intervals `(lo, hi]` for center sampling.
/// A gt is eligible on the level whose interval contains its longest
/// side; shared endpoints belong to the lower level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRanges {
    ranges: Vec<(f64, f64)>,
}

impl ScaleRanges {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidConfig("scale ranges must be non-empty".into()));
        }
        for &(lo, hi) in &ranges {
            if lo.is_nan() || hi.is_nan() || lo < 0.0 || hi <= lo {
                return Err(Error::InvalidConfig(format!(
                    "invalid scale interval ({lo}, {hi}]"
                )));
            }
        }
        for pair in ranges.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::InvalidConfig(format!(
                    "scale intervals must not overlap: ({}, {}] then ({}, {}]",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(Self { ranges })
    }

    /// Doubling ladder: `(0, base], (base, 2*base], ...` with the last
    /// interval unbounded.
    pub fn doubling(n_levels: usize, base: f64) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidConfig("need at least one level".into()));
        }
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::InvalidConfig(format!("base must be > 0, got {base}")));
        }
        let mut ranges = Vec::with_capacity(n_levels);
        let mut lo = 0.0;
        let mut hi = base;
        for level in 0..n_levels {
            let upper = if level + 1 == n_levels { f64::INFINITY } else { hi };
            ranges.push((lo, upper));
            lo = hi;
            hi *= 2.0;
        }
        Self::new(ranges)
    }

    pub fn n_levels(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// True when `scale` falls in level's interval.
    pub fn eligible(&self, level: usize, scale: f64) -> bool {
        let (lo, hi) = self.ranges[level];
        scale > lo && scale <= hi
    }
}

/// Tiles anchors over the pyramid grid: per level, per grid center, one
/// anchor per ratio with side `base_scale * stride` and area-preserving
/// aspect ratios (`w = side * sqrt(r)`, `h = side / sqrt(r)`).
pub fn generate_anchors(pspec: &PyramidSpec, aspec: &AnchorSpec) -> Result<Vec<Anchor>> {
    let points = build_grid(pspec)?;
    let mut anchors = Vec::with_capacity(points.len() * aspec.ratios.len());
    let mut flat_id = 0usize;
    for p in &points {
        let side = aspec.base_scale * pspec.levels[p.level].stride as f64;
        for &ratio in &aspec.ratios {
            let sqrt_r = ratio.sqrt();
            anchors.push(Anchor {
                bbox: BBox::new(p.px, p.py, side * sqrt_r, side / sqrt_r)?,
                level: p.level,
                flat_id,
            });
            flat_id += 1;
        }
    }
    Ok(anchors)
}

/// Corner form plus area, cached so repeated IoU evaluations against a
/// fixed tiling skip the per-call conversion. The arithmetic matches
/// `geometry::iou` term for term.
#[derive(Debug, Clone, Copy)]
struct BoxGeom {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    area: f64,
}

impl BoxGeom {
    fn of(b: &BBox) -> Self {
        let (x1, y1, x2, y2) = b.corners();
        Self {
            x1,
            y1,
            x2,
            y2,
            area: (x2 - x1) * (y2 - y1),
        }
    }
}

fn iou_geom(a: &BoxGeom, b: &BoxGeom) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area + b.area - inter)
}

/// Classic IoU-threshold assignment: an anchor is positive for its
/// best-IoU gt when that IoU reaches `pos_thr` (the smaller gt wins exact
/// IoU ties). With `low_quality_match`, each gt then claims its best-IoU
/// anchor (IoU > 0) unless a smaller gt already holds it.
pub fn maxiou_assign(anchors: &[Anchor], gts: &[BBox], cfg: &MaxIouConfig) -> AssignmentResult {
    let geoms: Vec<BoxGeom> = anchors.iter().map(|a| BoxGeom::of(&a.bbox)).collect();
    maxiou_assign_geoms(&geoms, gts, cfg)
}

fn maxiou_assign_geoms(anchors: &[BoxGeom], gts: &[BBox], cfg: &MaxIouConfig) -> AssignmentResult {
    let mut labels = vec![Label::Background; anchors.len()];
    if gts.is_empty() {
        return AssignmentResult::from_labels(labels, 0)
            .expect("background-only labels are always valid");
    }

    let gt_geoms: Vec<BoxGeom> = gts.iter().map(BoxGeom::of).collect();
    let mut ious = vec![0.0f64; anchors.len() * gts.len()];
    for (i, anchor) in anchors.iter().enumerate() {
        for (j, gt) in gt_geoms.iter().enumerate() {
            ious[i * gts.len() + j] = iou_geom(anchor, gt);
        }
    }

    for (i, _) in anchors.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            let v = ious[i * gts.len() + j];
            let better = match best {
                None => true,
                Some((bj, bv)) => {
                    v > bv || (v == bv && (gt.area(), j) < (gts[bj].area(), bj))
                }
            };
            if better {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            if v >= cfg.pos_thr && v > 0.0 {
                labels[i] = Label::Positive {
                    gt: j,
                    stage: Stage::TopK,
                    score: v,
                };
            }
        }
    }

    if cfg.low_quality_match {
        for (j, gt) in gts.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..anchors.len() {
                let v = ious[i * gts.len() + j];
                if v > 0.0 && best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
            if let Some((i, v)) = best {
                let keep = match labels[i] {
                    Label::Positive { gt: held, .. } => {
                        (gts[held].area(), held) < (gt.area(), j)
                    }
                    Label::Background => false,
                };
                if !keep {
                    labels[i] = Label::Positive {
                        gt: j,
                        stage: Stage::Supplement,
                        score: v,
                    };
                }
            }
        }
    }

    AssignmentResult::from_labels(labels, gts.len())
        .expect("iou-based labels are always in range")
}

/// Anchor-free center sampling: a point is positive for a gt when it lies
/// inside the gt box and the gt's longest side falls in the point's level
/// range. A point inside several eligible gts goes to the smallest one.
/// Positive labels carry a membership score of 1.
pub fn center_sampling_assign(
    points: &[FeaturePoint],
    gts: &[BBox],
    ranges: &ScaleRanges,
) -> AssignmentResult {
    let labels: Vec<Label> = points
        .iter()
        .map(|p| {
            let mut best: Option<usize> = None;
            for (j, gt) in gts.iter().enumerate() {
                if !ranges.eligible(p.level, gt.scale()) || !gt.contains(p.px, p.py) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(held) => (gt.area(), j) < (gts[held].area(), held),
                };
                if better {
                    best = Some(j);
                }
            }
            match best {
                Some(j) => Label::Positive {
                    gt: j,
                    stage: Stage::TopK,
                    score: 1.0,
                },
                None => Label::Background,
            }
        })
        .collect();
    AssignmentResult::from_labels(labels, gts.len())
        .expect("membership labels are always valid")
}

/// Hierarchical assignment with anchors as the priors: each anchor is
/// modelled as the Gaussian of its box and run through the same two-stage
/// strategy as the receptive-field path.
pub fn gaussian_anchor_assign(
    anchors: &[Anchor],
    gts: &[BBox],
    cfg: &HlaConfig,
) -> AssignmentResult {
    let priors: Vec<Gaussian2D> = anchors.iter().map(|a| gt_gaussian(a.bbox)).collect();
    hla_assign_priors(&priors, gts, cfg)
}

/// IoU-threshold assignment with the anchor scale replaced by the ERF
/// scale: each feature point contributes a square anchor of side
/// `2 * er`.
pub fn receptive_anchor_assign(
    points: &[FeaturePoint],
    gts: &[BBox],
    cfg: &MaxIouConfig,
) -> AssignmentResult {
    let anchors: Vec<Anchor> = points
        .iter()
        .map(|p| Anchor {
            bbox: BBox::new(p.px, p.py, 2.0 * p.er, 2.0 * p.er)
                .expect("feature point invariants guarantee a valid box"),
            level: p.level,
            flat_id: p.flat_id,
        })
        .collect();
    maxiou_assign(&anchors, gts, cfg)
}

/// Assigner wrapper around [`maxiou_assign`] with a fixed anchor tiling;
/// corner geometry is cached at construction.
#[derive(Debug, Clone)]
pub struct MaxIouAssigner {
    anchors: Vec<Anchor>,
    geoms: Vec<BoxGeom>,
    cfg: MaxIouConfig,
}

impl MaxIouAssigner {
    pub fn new(anchors: Vec<Anchor>, cfg: MaxIouConfig) -> Self {
        let geoms = anchors.iter().map(|a| BoxGeom::of(&a.bbox)).collect();
        Self {
            anchors,
            geoms,
            cfg,
        }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }
}

impl Assigner for MaxIouAssigner {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult {
        maxiou_assign_geoms(&self.geoms, gts, &self.cfg)
    }
}

/// Assigner wrapper around [`center_sampling_assign`].
#[derive(Debug, Clone)]
pub struct CenterSamplingAssigner {
    points: Vec<FeaturePoint>,
    ranges: ScaleRanges,
}

impl CenterSamplingAssigner {
    pub fn new(points: Vec<FeaturePoint>, ranges: ScaleRanges) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.level >= ranges.n_levels()) {
            return Err(Error::InvalidConfig(format!(
                "point level {} has no scale range (only {} configured)",
                p.level,
                ranges.n_levels()
            )));
        }
        Ok(Self { points, ranges })
    }
}

impl Assigner for CenterSamplingAssigner {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult {
        center_sampling_assign(&self.points, gts, &self.ranges)
    }
}

/// Assigner wrapper around [`gaussian_anchor_assign`]; the anchor
/// Gaussians and their decayed stage kernels are prepared once.
#[derive(Debug, Clone)]
pub struct GaussianAnchorAssigner {
    anchors: Vec<Anchor>,
    cfg: HlaConfig,
    base: Vec<PriorKernel>,
    decayed: Vec<PriorKernel>,
}

impl GaussianAnchorAssigner {
    pub fn new(anchors: Vec<Anchor>, cfg: HlaConfig) -> Self {
        let priors: Vec<Gaussian2D> = anchors.iter().map(|a| gt_gaussian(a.bbox)).collect();
        let (base, decayed) = prepare_stages(&priors, cfg.beta);
        Self {
            anchors,
            cfg,
            base,
            decayed,
        }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }
}

impl Assigner for GaussianAnchorAssigner {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult {
        hla_assign_prepared(&self.base, &self.decayed, gts, &self.cfg)
    }
}

/// Assigner wrapper around [`receptive_anchor_assign`]; the ERF-sized
/// boxes are tiled once at construction.
#[derive(Debug, Clone)]
pub struct ReceptiveAnchorAssigner {
    geoms: Vec<BoxGeom>,
    cfg: MaxIouConfig,
}

impl ReceptiveAnchorAssigner {
    pub fn new(points: Vec<FeaturePoint>, cfg: MaxIouConfig) -> Self {
        let geoms = points
            .iter()
            .map(|p| {
                BoxGeom::of(
                    &BBox::new(p.px, p.py, 2.0 * p.er, 2.0 * p.er)
                        .expect("feature point invariants guarantee a valid box"),
                )
            })
            .collect();
        Self { geoms, cfg }
    }
}

impl Assigner for ReceptiveAnchorAssigner {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult {
        maxiou_assign_geoms(&self.geoms, gts, &self.cfg)
    }
}
