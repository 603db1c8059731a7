//! Assignment domain types shared by every assigner: feature points,
//! per-point labels and the aggregated assignment result.

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// One feature-pyramid location: level index, image-space center,
/// effective receptive-field radius and a dense id unique across levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub level: usize,
    pub px: f64,
    pub py: f64,
    pub er: f64,
    pub flat_id: usize,
}

impl FeaturePoint {
    pub fn new(level: usize, px: f64, py: f64, er: f64, flat_id: usize) -> Result<Self> {
        if !(px.is_finite() && py.is_finite() && er.is_finite()) {
            return Err(Error::InvalidFeaturePoint(format!(
                "non-finite field in ({px}, {py}, er={er})"
            )));
        }
        if er <= 0.0 {
            return Err(Error::InvalidFeaturePoint(format!(
                "er must be > 0, got {er}"
            )));
        }
        Ok(Self {
            level,
            px,
            py,
            er,
            flat_id,
        })
    }
}

/// Which pass of an assigner produced a positive label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// First pass: rank-based top-k (or threshold) selection.
    TopK,
    /// Second pass: the per-gt supplement with decayed radii
    /// (or the low-quality fallback of the IoU baseline).
    Supplement,
}

impl Stage {
    /// 1-based stage number as emitted in label tables.
    pub fn index(self) -> u8 {
        match self {
            Stage::TopK => 1,
            Stage::Supplement => 2,
        }
    }
}

/// Per-point (or per-anchor) assignment outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Background,
    Positive { gt: usize, stage: Stage, score: f64 },
}

impl Label {
    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Positive { .. })
    }
}

/// Labels for a full set of priors plus per-gt aggregates.
///
/// The per-gt counters are derived from the labels at construction, so
/// `positive_count(g)` always equals the number of positive labels that
/// reference gt `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    labels: Vec<Label>,
    gt_positive_counts: Vec<u64>,
    gt_max_scores: Vec<Option<f64>>,
}

impl AssignmentResult {
    pub fn from_labels(labels: Vec<Label>, n_gts: usize) -> Result<Self> {
        let mut counts = vec![0u64; n_gts];
        let mut max_scores = vec![None; n_gts];
        for label in &labels {
            if let Label::Positive { gt, score, .. } = *label {
                if gt >= n_gts {
                    return Err(Error::InvalidAssignment(format!(
                        "label references gt {gt} but only {n_gts} gts exist"
                    )));
                }
                if !(score.is_finite() && score > 0.0 && score <= 1.0) {
                    return Err(Error::InvalidAssignment(format!(
                        "positive score must lie in (0, 1], got {score}"
                    )));
                }
                counts[gt] += 1;
                let entry = &mut max_scores[gt];
                *entry = Some(entry.map_or(score, |m: f64| m.max(score)));
            }
        }
        Ok(Self {
            labels,
            gt_positive_counts: counts,
            gt_max_scores: max_scores,
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn n_gts(&self) -> usize {
        self.gt_positive_counts.len()
    }

    /// Number of positive labels referencing gt `g`.
    pub fn positive_count(&self, g: usize) -> u64 {
        self.gt_positive_counts[g]
    }

    pub fn positive_counts(&self) -> &[u64] {
        &self.gt_positive_counts
    }

    /// Highest positive score recorded for gt `g`, if any.
    pub fn max_score(&self, g: usize) -> Option<f64> {
        self.gt_max_scores[g]
    }

    pub fn total_positives(&self) -> u64 {
        self.gt_positive_counts.iter().sum()
    }

    /// Positives contributed by the supplement stage.
    pub fn supplement_positives(&self) -> u64 {
        self.labels
            .iter()
            .filter(|l| matches!(l, Label::Positive { stage: Stage::Supplement, .. }))
            .count() as u64
    }
}

/// Anything that labels a set of ground-truth boxes against a fixed prior
/// set (feature-point grid or anchor tiling). The simulation harness is
/// generic over this trait.
pub trait Assigner: Sync {
    fn assign(&self, gts: &[BBox]) -> AssignmentResult;
}
