//! Hierarchical label assignment over an RFD score matrix.
//!
//! Assignment runs in two stages:
//!
//! 1. every gt marks its `k` highest-scoring priors as positive, with the
//!    ranking taken jointly over all pyramid levels (the score itself
//!    encodes scale matching, so there is no per-level grouping);
//! 2. all prior radii are decayed by the stage factor `beta`, scores are
//!    recomputed, and each gt supplements its single best-scoring prior.
//!
//! The two stages merge through the stage-1 mask `m`: the final result is
//! `r1 * m + r2 * (1 - m)`, i.e. a supplement only takes effect on priors
//! that stage 1 left unassigned. A prior wanted by several gts always goes
//! to the one with the smaller area, remaining ties to the lower gt index.

use crate::assignment::{Assigner, AssignmentResult, FeaturePoint, Label, Stage};
use crate::distances::{score_matrix_prepared, MetricKind, PriorKernel, ScoreMatrix};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;
use crate::geometry::BBox;
use crate::receptive_field::erf_gaussian;

/// Hierarchical assignment parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlaConfig {
    /// Number of priors each gt claims in the first stage.
    pub k: usize,
    /// Radius decay applied to every prior before the supplement stage.
    pub beta: f64,
    pub metric: MetricKind,
}

impl HlaConfig {
    pub fn new(k: usize, beta: f64, metric: MetricKind) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidConfig(format!("k must be >= 1, got {k}")));
        }
        if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0, 1], got {beta}"
            )));
        }
        Ok(Self { k, beta, metric })
    }
}

impl Default for HlaConfig {
    fn default() -> Self {
        Self {
            k: 3,
            beta: 0.9,
            metric: MetricKind::Kld,
        }
    }
}

/// Per-row provisional assignment: the winning gt column and its score.
type Provisional = Vec<Option<(usize, f64)>>;

/// Top-k selection per gt column with conflict resolution.
///
/// Within a column, rows rank by score descending with the lower row index
/// winning exact ties. A row claimed by several gts goes to the gt with
/// the smaller area, then the lower index.
fn topk_provisional(scores: &ScoreMatrix, gts: &[BBox], k: usize) -> Provisional {
    debug_assert_eq!(scores.n_cols(), gts.len());
    let n_rows = scores.n_rows();
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; n_rows];

    for (j, gt) in gts.iter().enumerate() {
        for row in top_k_rows(scores, j, k) {
            let score = scores.get(row, j);
            match claims[row] {
                None => claims[row] = Some((j, score)),
                Some((held, _)) => {
                    let held_key = (gts[held].area(), held);
                    let new_key = (gt.area(), j);
                    if new_key < held_key {
                        claims[row] = Some((j, score));
                    }
                }
            }
        }
    }
    claims
}

/// Row indices of the `k` best scores in column `j`, best first.
fn top_k_rows(scores: &ScoreMatrix, j: usize, k: usize) -> Vec<usize> {
    let n_rows = scores.n_rows();
    let k = k.min(n_rows);
    // (score, row) buffer ordered best-first; single pass, O(rows * k).
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (row, score) in scores.column(j).enumerate() {
        if best.len() == k {
            let (worst_score, worst_row) = best[k - 1];
            if score < worst_score || (score == worst_score && row > worst_row) {
                continue;
            }
        }
        let pos = best
            .partition_point(|&(s, r)| s > score || (s == score && r < row));
        best.insert(pos, (score, row));
        best.truncate(k);
    }
    best.into_iter().map(|(_, row)| row).collect()
}

/// First assignment stage as a standalone operation: each gt labels its
/// top-k rows of the score matrix, conflicts resolved smaller-gt-first.
pub fn stage_topk(scores: &ScoreMatrix, gts: &[BBox], k: usize) -> Vec<Label> {
    topk_provisional(scores, gts, k)
        .into_iter()
        .map(|claim| match claim {
            Some((gt, score)) => Label::Positive {
                gt,
                stage: Stage::TopK,
                score,
            },
            None => Label::Background,
        })
        .collect()
}

/// Runs the full two-stage assignment of feature points to gts.
pub fn hla_assign(points: &[FeaturePoint], gts: &[BBox], cfg: &HlaConfig) -> AssignmentResult {
    let priors: Vec<Gaussian2D> = points.iter().map(erf_gaussian).collect();
    hla_assign_priors(&priors, gts, cfg)
}

/// Prepares the base and radius-decayed kernel sets for a prior list.
/// The decay shrinks each prior's standard deviations by `beta` while
/// keeping its location.
pub(crate) fn prepare_stages(
    priors: &[Gaussian2D],
    beta: f64,
) -> (Vec<PriorKernel>, Vec<PriorKernel>) {
    let base = priors.iter().map(PriorKernel::new).collect();
    let decayed = priors
        .iter()
        .map(|g| {
            PriorKernel::new(
                &g.scale_sigma(beta)
                    .expect("beta in (0, 1] keeps variances positive"),
            )
        })
        .collect();
    (base, decayed)
}

/// Two-stage assignment over arbitrary Gaussian priors.
pub(crate) fn hla_assign_priors(
    priors: &[Gaussian2D],
    gts: &[BBox],
    cfg: &HlaConfig,
) -> AssignmentResult {
    let (base, decayed) = prepare_stages(priors, cfg.beta);
    hla_assign_prepared(&base, &decayed, gts, cfg)
}

/// Two-stage assignment over prepared prior kernels. Scores are computed
/// from scratch for each stage because neither distance kernel transforms
/// affinely under a radius decay.
pub(crate) fn hla_assign_prepared(
    base: &[PriorKernel],
    decayed: &[PriorKernel],
    gts: &[BBox],
    cfg: &HlaConfig,
) -> AssignmentResult {
    debug_assert_eq!(base.len(), decayed.len());
    if gts.is_empty() {
        let labels = vec![Label::Background; base.len()];
        return AssignmentResult::from_labels(labels, 0)
            .expect("background-only labels are always valid");
    }

    let s1 = score_matrix_prepared(base, gts, cfg.metric);
    let r1 = topk_provisional(&s1, gts, cfg.k);

    let s2 = score_matrix_prepared(decayed, gts, cfg.metric);
    let r2 = topk_provisional(&s2, gts, 1);

    // r = r1 * m + r2 * (1 - m): the supplement only lands on rows that
    // stage 1 left unassigned.
    let labels: Vec<Label> = r1
        .iter()
        .zip(&r2)
        .map(|(stage1, stage2)| match (stage1, stage2) {
            (Some((gt, score)), _) => Label::Positive {
                gt: *gt,
                stage: Stage::TopK,
                score: *score,
            },
            (None, Some((gt, score))) => Label::Positive {
                gt: *gt,
                stage: Stage::Supplement,
                score: *score,
            },
            (None, None) => Label::Background,
        })
        .collect();

    AssignmentResult::from_labels(labels, gts.len())
        .expect("stage selection only emits in-range gts and scores in (0, 1]")
}

/// Feature-point assigner running the two-stage strategy. The prior set
/// is fixed at construction and its stage kernels are prepared once; gts
/// vary per call.
#[derive(Debug, Clone)]
pub struct RflaAssigner {
    points: Vec<FeaturePoint>,
    cfg: HlaConfig,
    base: Vec<PriorKernel>,
    decayed: Vec<PriorKernel>,
}

impl RflaAssigner {
    pub fn new(points: Vec<FeaturePoint>, cfg: HlaConfig) -> Self {
        let priors: Vec<Gaussian2D> = points.iter().map(erf_gaussian).collect();
        let (base, decayed) = prepare_stages(&priors, cfg.beta);
        Self {
            points,
            cfg,
            base,
            decayed,
        }
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    pub fn config(&self) -> &HlaConfig {
        &self.cfg
    }
}

impl Assigner for RflaAssigner {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult {
        hla_assign_prepared(&self.base, &self.decayed, gts, &self.cfg)
    }
}
