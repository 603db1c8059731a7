//! Closed-form distances between the Gaussian ERF of a prior and a
//! Gaussian-modelled ground-truth box, plus the normalization that turns a
//! distance into a receptive-field-distance (RFD) score in `(0, 1]`.
//!
//! Three distance candidates are supported:
//!
//! * squared 2-Wasserstein distance — finite and informative for fully
//!   non-overlapping configurations, but not scale invariant (it scales
//!   as `s²` under a joint rescaling by `s`);
//! * Kullback-Leibler divergence, direction `D(erf ‖ gt)` — scale
//!   invariant, which is what makes it attractive for very small boxes;
//! * a generalized-IoU baseline over the ERF-sized box, mapped to a
//!   distance as `1 - giou` so it can pass through the same normalization.

use crate::assignment::FeaturePoint;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;
use crate::geometry::{giou, BBox};
use crate::receptive_field::erf_gaussian;

/// Distance kernel selection for an assignment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Wasserstein,
    Kld,
    Giou,
}

/// Models a ground-truth box as a Gaussian: mean at the box center,
/// per-axis variance the squared half side length.
pub fn gt_gaussian(b: BBox) -> Gaussian2D {
    let hw = 0.5 * b.w();
    let hh = 0.5 * b.h();
    Gaussian2D::new(b.cx(), b.cy(), hw * hw, hh * hh)
        .expect("box invariants guarantee a valid gaussian")
}

/// A prior Gaussian with everything the distance kernels read off it
/// precomputed: standard deviations, the log-determinant of the
/// covariance, and the corner form of the equivalent box. Assigners cache
/// these across calls; all score paths route through the same kernels so
/// results are bit-identical however they are reached.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PriorKernel {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    sigma_x: f64,
    sigma_y: f64,
    log_det: f64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    area: f64,
}

impl PriorKernel {
    pub(crate) fn new(g: &Gaussian2D) -> Self {
        let sigma_x = g.sigma_x();
        let sigma_y = g.sigma_y();
        let (x1, y1, x2, y2) = (
            g.mu_x() - sigma_x,
            g.mu_y() - sigma_y,
            g.mu_x() + sigma_x,
            g.mu_y() + sigma_y,
        );
        Self {
            mu_x: g.mu_x(),
            mu_y: g.mu_y(),
            var_x: g.var_x(),
            var_y: g.var_y(),
            sigma_x,
            sigma_y,
            log_det: (g.var_x() * g.var_y()).ln(),
            x1,
            y1,
            x2,
            y2,
            area: (x2 - x1) * (y2 - y1),
        }
    }
}

/// A ground-truth box prepared for the distance kernels: its Gaussian
/// moments with inverted variances, plus its own corner form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GtKernel {
    mu_x: f64,
    mu_y: f64,
    inv_var_x: f64,
    inv_var_y: f64,
    sigma_x: f64,
    sigma_y: f64,
    log_det: f64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    area: f64,
}

impl GtKernel {
    pub(crate) fn of_box(b: &BBox) -> Self {
        Self::of_gaussian(&gt_gaussian(*b))
    }

    pub(crate) fn of_gaussian(g: &Gaussian2D) -> Self {
        let sigma_x = g.sigma_x();
        let sigma_y = g.sigma_y();
        let (x1, y1, x2, y2) = (
            g.mu_x() - sigma_x,
            g.mu_y() - sigma_y,
            g.mu_x() + sigma_x,
            g.mu_y() + sigma_y,
        );
        Self {
            mu_x: g.mu_x(),
            mu_y: g.mu_y(),
            inv_var_x: 1.0 / g.var_x(),
            inv_var_y: 1.0 / g.var_y(),
            sigma_x,
            sigma_y,
            log_det: (g.var_x() * g.var_y()).ln(),
            x1,
            y1,
            x2,
            y2,
            area: (x2 - x1) * (y2 - y1),
        }
    }
}

fn w2_kernel(p: &PriorKernel, g: &GtKernel) -> f64 {
    let dx = p.mu_x - g.mu_x;
    let dy = p.mu_y - g.mu_y;
    let dsx = p.sigma_x - g.sigma_x;
    let dsy = p.sigma_y - g.sigma_y;
    dx * dx + dy * dy + dsx * dsx + dsy * dsy
}

fn kld_kernel(p: &PriorKernel, g: &GtKernel) -> f64 {
    let dx = p.mu_x - g.mu_x;
    let dy = p.mu_y - g.mu_y;
    let ratio = p.var_x * g.inv_var_x + p.var_y * g.inv_var_y;
    let quad = dx * dx * g.inv_var_x + dy * dy * g.inv_var_y;
    (0.5 * (ratio + quad - 2.0) + 0.5 * (g.log_det - p.log_det)).max(0.0)
}

/// GIoU over the prepared corner forms; the arithmetic mirrors
/// `geometry::giou` term for term.
fn giou_kernel(p: &PriorKernel, g: &GtKernel) -> f64 {
    let iw = p.x2.min(g.x2) - p.x1.max(g.x1);
    let ih = p.y2.min(g.y2) - p.y1.max(g.y1);
    let inter = if iw <= 0.0 || ih <= 0.0 { 0.0 } else { iw * ih };
    let union = p.area + g.area - inter;
    let enclosure = (p.x2.max(g.x2) - p.x1.min(g.x1)) * (p.y2.max(g.y2) - p.y1.min(g.y1));
    inter / union - (enclosure - union) / enclosure
}

fn rfdc_kernel(metric: MetricKind, p: &PriorKernel, g: &GtKernel) -> f64 {
    match metric {
        MetricKind::Wasserstein => w2_kernel(p, g),
        MetricKind::Kld => kld_kernel(p, g),
        // GIoU lies in (-1, 1]; 1 - giou maps it onto [0, 2) while
        // preserving the ranking.
        MetricKind::Giou => (1.0 - giou_kernel(p, g)).max(0.0),
    }
}

/// Squared 2-Wasserstein distance between two diagonal Gaussians:
/// the squared Euclidean distance between the parameter vectors
/// `[mu_x, mu_y, sigma_x, sigma_y]` of the two distributions.
///
/// Symmetric, and zero exactly when the distributions coincide.
pub fn wasserstein2_sq(ne: &Gaussian2D, ng: &Gaussian2D) -> f64 {
    w2_kernel(&PriorKernel::new(ne), &GtKernel::of_gaussian(ng))
}

/// Kullback-Leibler divergence `D(ne ‖ ng)` between two diagonal
/// Gaussians, per-axis closed form:
///
/// ```text
/// D = 1/2 * sum_axis( ve/vg + d²/vg - 1 ) + 1/2 * ln( (vg_x*vg_y) / (ve_x*ve_y) )
/// ```
///
/// Non-negative and zero exactly when the distributions coincide. Tiny
/// negative rounding residues are clamped to zero. The direction is fixed:
/// the prior (ERF) first, the ground truth second.
pub fn kld(ne: &Gaussian2D, ng: &Gaussian2D) -> f64 {
    kld_kernel(&PriorKernel::new(ne), &GtKernel::of_gaussian(ng))
}

/// Generalized IoU between the ERF-sized box of a feature point (a square
/// of side `2 * er` centered on the point) and a ground-truth box.
pub fn giou_erf(p: &FeaturePoint, b: BBox) -> f64 {
    let erf_box = BBox::new(p.px, p.py, 2.0 * p.er, 2.0 * p.er)
        .expect("feature point invariants guarantee a valid box");
    giou(erf_box, b)
}

/// Normalizes a non-negative distance into a score in `(0, 1]`:
/// `1 / (1 + rfdc)`. Strictly decreasing, 1 at zero distance.
pub fn rfd(rfdc: f64) -> Result<f64> {
    if !rfdc.is_finite() || rfdc < 0.0 {
        return Err(Error::InvalidDistance(format!(
            "rfd expects a finite non-negative distance, got {rfdc}"
        )));
    }
    Ok(1.0 / (1.0 + rfdc))
}

/// Dense score matrix: rows are priors (feature points or anchors),
/// columns are ground-truth boxes, entries are RFD scores in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.data[row * self.n_cols + col]
    }

    /// Scores of one gt column across all rows.
    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        debug_assert!(col < self.n_cols);
        (0..self.n_rows).map(move |r| self.get(r, col))
    }
}

/// RFD score matrix between the ERF Gaussians of `points` and the
/// Gaussians of `gts`. `gts` may be empty; the result then has zero
/// columns.
pub fn score_matrix(points: &[FeaturePoint], gts: &[BBox], metric: MetricKind) -> ScoreMatrix {
    let priors: Vec<Gaussian2D> = points.iter().map(erf_gaussian).collect();
    score_matrix_priors(&priors, gts, metric)
}

/// Score matrix over arbitrary Gaussian priors.
pub(crate) fn score_matrix_priors(
    priors: &[Gaussian2D],
    gts: &[BBox],
    metric: MetricKind,
) -> ScoreMatrix {
    let prepared: Vec<PriorKernel> = priors.iter().map(PriorKernel::new).collect();
    score_matrix_prepared(&prepared, gts, metric)
}

/// Score matrix over prepared priors. This is the workhorse shared by the
/// hierarchical assigner (which keeps prepared base and radius-decayed
/// prior sets) and the Gaussian-anchor variant.
pub(crate) fn score_matrix_prepared(
    priors: &[PriorKernel],
    gts: &[BBox],
    metric: MetricKind,
) -> ScoreMatrix {
    let gt_kernels: Vec<GtKernel> = gts.iter().map(GtKernel::of_box).collect();
    let mut data = Vec::with_capacity(priors.len() * gts.len());
    for prior in priors {
        for gt in &gt_kernels {
            let rfdc = rfdc_kernel(metric, prior, gt);
            let score = 1.0 / (1.0 + rfdc);
            debug_assert!(score > 0.0 && score <= 1.0);
            data.push(score);
        }
    }
    ScoreMatrix {
        n_rows: priors.len(),
        n_cols: gts.len(),
        data,
    }
}
