//! Deterministic simulation harness for the scale-sample imbalance study
//! and the sensitivity sweeps.
//!
//! Ground-truth boxes are drawn from seeded, per-trial random streams and
//! fed through an assigner one trial at a time; the harness then reports
//! the mean number of positives per gt over equal-width scale intervals.
//!
//! Reproducibility rules:
//! * the generator is ChaCha8, seeded from the configured seed, with the
//!   ChaCha stream id set to the trial index — adding trials never
//!   perturbs earlier ones, and parallel and serial runs see identical
//!   streams;
//! * histogram reduction runs over exact integer counts in trial order,
//!   so results are bit-identical regardless of the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::Assigner;
use crate::baselines::{generate_anchors, AnchorSpec, MaxIouAssigner, MaxIouConfig};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::hla::{HlaConfig, RflaAssigner};
use crate::receptive_field::PyramidSpec;

/// Floor applied to the smallest interval mean when computing the
/// imbalance ratio, so assigners that starve an interval entirely do not
/// divide by zero.
pub const IMBALANCE_EPS: f64 = 1e-3;

/// Shape model for generated boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AspectMode {
    /// `w = h = scale`.
    Square,
    /// Width/height ratio drawn uniformly from `[lo, hi]`, the box then
    /// scaled so its longest side equals the drawn scale.
    Jitter { lo: f64, hi: f64 },
}

/// Protocol of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub seed: u64,
    pub n_trials: usize,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub n_intervals: usize,
    pub aspect: AspectMode,
    pub image_w: u64,
    pub image_h: u64,
    /// Boxes assigned together per trial; 1 isolates scale effects,
    /// larger values exercise the conflict rules.
    pub gts_per_trial: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_trials: 10_000,
            scale_lo: 0.0,
            scale_hi: 64.0,
            n_intervals: 16,
            aspect: AspectMode::Square,
            image_w: 800,
            image_h: 800,
            gts_per_trial: 1,
        }
    }
}

impl TrialConfig {
    /// Geometry checks shared by generation and aggregation.
    fn validate_geometry(&self) -> Result<()> {
        if !(self.scale_lo.is_finite() && self.scale_hi.is_finite()) {
            return Err(Error::InvalidTrial("scale bounds must be finite".into()));
        }
        if self.scale_lo < 0.0 || self.scale_lo >= self.scale_hi {
            return Err(Error::InvalidTrial(format!(
                "need 0 <= scale_lo < scale_hi, got ({}, {})",
                self.scale_lo, self.scale_hi
            )));
        }
        let extent = self.image_w.min(self.image_h) as f64;
        if self.image_w == 0 || self.image_h == 0 || self.scale_hi > extent {
            return Err(Error::InvalidTrial(format!(
                "scale_hi {} exceeds the image extent {extent}",
                self.scale_hi
            )));
        }
        if let AspectMode::Jitter { lo, hi } = self.aspect {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
                return Err(Error::InvalidTrial(format!(
                    "jitter ratios must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Full validation as required before an aggregation run.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if self.n_trials < 1 {
            return Err(Error::InvalidTrial("n_trials must be >= 1".into()));
        }
        if self.n_intervals < 1 {
            return Err(Error::InvalidTrial("n_intervals must be >= 1".into()));
        }
        if self.gts_per_trial < 1 {
            return Err(Error::InvalidTrial("gts_per_trial must be >= 1".into()));
        }
        Ok(())
    }

    fn interval_width(&self) -> f64 {
        (self.scale_hi - self.scale_lo) / self.n_intervals as f64
    }

    /// Interval index of a box scale; scales at the upper bound land in
    /// the last interval.
    fn interval_of(&self, scale: f64) -> usize {
        let raw = ((scale - self.scale_lo) / self.interval_width()) as usize;
        raw.min(self.n_intervals - 1)
    }
}

/// Worker strategy for trial evaluation. Results are bit-identical either
/// way; `Rayon` only changes the wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Rayon,
}

/// Draws `n_trials` boxes, fully determined by the seed.
///
/// Per box, scale is uniform in `(scale_lo, scale_hi]`, the shape follows
/// the aspect mode, and the center is uniform over the image inset by half
/// the box extent so the box lies fully inside. Draw order within a trial
/// stream: scale, ratio (jitter mode only), center x, center y.
pub fn random_gts(cfg: &TrialConfig) -> Result<Vec<BBox>> {
    cfg.validate_geometry()?;
    let mut boxes = Vec::with_capacity(cfg.n_trials);
    for trial in 0..cfg.n_trials {
        let mut rng = trial_rng(cfg.seed, trial as u64);
        // hi - u * (hi - lo) maps [0, 1) onto (lo, hi].
        let scale = cfg.scale_hi - rng.gen::<f64>() * (cfg.scale_hi - cfg.scale_lo);
        let (w, h) = match cfg.aspect {
            AspectMode::Square => (scale, scale),
            AspectMode::Jitter { lo, hi } => {
                let ratio = lo + rng.gen::<f64>() * (hi - lo);
                if ratio >= 1.0 {
                    (scale, scale / ratio)
                } else {
                    (scale * ratio, scale)
                }
            }
        };
        let cx = 0.5 * w + rng.gen::<f64>() * (cfg.image_w as f64 - w);
        let cy = 0.5 * h + rng.gen::<f64>() * (cfg.image_h as f64 - h);
        boxes.push(BBox::new(cx, cy, w, h)?);
    }
    Ok(boxes)
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Statistics of one scale interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStats {
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub n_gts: u64,
    pub mean_positives: f64,
    pub stddev_positives: f64,
}

/// Mean positives per gt, bucketed by object scale.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalHistogram {
    pub intervals: Vec<IntervalStats>,
    pub total_gts: u64,
    pub total_positives: u64,
    pub supplement_positives: u64,
}

/// Aggregate view of a histogram, the payload of sweep tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSummary {
    pub mean_pos_overall: f64,
    pub min_interval_mean: f64,
    pub max_interval_mean: f64,
    /// `max_interval_mean / max(min_interval_mean, IMBALANCE_EPS)`.
    pub imbalance: f64,
    /// Fraction of positives contributed by the supplement stage.
    pub supplement_share: f64,
}

impl IntervalHistogram {
    pub fn summary(&self) -> HistogramSummary {
        let occupied: Vec<f64> = self
            .intervals
            .iter()
            .filter(|s| s.n_gts > 0)
            .map(|s| s.mean_positives)
            .collect();
        let min = occupied.iter().copied().fold(f64::INFINITY, f64::min);
        let max = occupied.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_pos_overall = if self.total_gts == 0 {
            0.0
        } else {
            self.total_positives as f64 / self.total_gts as f64
        };
        let supplement_share = if self.total_positives == 0 {
            0.0
        } else {
            self.supplement_positives as f64 / self.total_positives as f64
        };
        HistogramSummary {
            mean_pos_overall,
            min_interval_mean: min,
            max_interval_mean: max,
            imbalance: max / min.max(IMBALANCE_EPS),
            supplement_share,
        }
    }
}

/// Runs the assigner over every trial and buckets positives per gt by
/// object scale.
pub fn positives_per_interval(
    assigner: &dyn Assigner,
    cfg: &TrialConfig,
    par: Parallelism,
) -> Result<IntervalHistogram> {
    cfg.validate()?;
    let gts = random_gts(cfg)?;
    let batches: Vec<&[BBox]> = gts.chunks(cfg.gts_per_trial).collect();

    // (interval, positives) per gt plus whole-batch stage counters.
    type BatchOutcome = (Vec<(usize, u64)>, u64, u64);
    let eval = |batch: &&[BBox]| -> BatchOutcome {
        let result = assigner.assign(batch);
        let per_gt = batch
            .iter()
            .enumerate()
            .map(|(j, gt)| (cfg.interval_of(gt.scale()), result.positive_count(j)))
            .collect();
        (per_gt, result.total_positives(), result.supplement_positives())
    };
    let outcomes: Vec<BatchOutcome> = match par {
        Parallelism::Sequential => batches.iter().map(eval).collect(),
        Parallelism::Rayon => batches.par_iter().map(eval).collect(),
    };

    // Exact integer reduction in trial order.
    let n = cfg.n_intervals;
    let mut n_gts = vec![0u64; n];
    let mut sums = vec![0u64; n];
    let mut sumsqs = vec![0u128; n];
    let mut total_positives = 0u64;
    let mut supplement_positives = 0u64;
    for (per_gt, pos, supp) in &outcomes {
        for &(bin, count) in per_gt {
            n_gts[bin] += 1;
            sums[bin] += count;
            sumsqs[bin] += (count as u128) * (count as u128);
        }
        total_positives += pos;
        supplement_positives += supp;
    }

    let width = cfg.interval_width();
    let intervals = (0..n)
        .map(|i| {
            let count = n_gts[i];
            let (mean, stddev) = if count == 0 {
                (0.0, 0.0)
            } else {
                let mean = sums[i] as f64 / count as f64;
                // Population variance from exact integer moments.
                let numer = (count as u128) * sumsqs[i] - (sums[i] as u128) * (sums[i] as u128);
                let var = numer as f64 / (count as f64 * count as f64);
                (mean, var.sqrt())
            };
            IntervalStats {
                scale_lo: cfg.scale_lo + i as f64 * width,
                scale_hi: cfg.scale_lo + (i + 1) as f64 * width,
                n_gts: count,
                mean_positives: mean,
                stddev_positives: stddev,
            }
        })
        .collect();

    Ok(IntervalHistogram {
        intervals,
        total_gts: gts.len() as u64,
        total_positives,
        supplement_positives,
    })
}

/// One row of a sweep table: the swept value and its full histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: f64,
    pub histogram: IntervalHistogram,
}

/// Reruns the two-stage assigner for each `k`, everything else fixed.
pub fn sweep_k(
    ks: &[usize],
    points: &[crate::assignment::FeaturePoint],
    base: &HlaConfig,
    cfg: &TrialConfig,
    par: Parallelism,
) -> Result<Vec<SweepEntry>> {
    ks.iter()
        .map(|&k| {
            let hla = HlaConfig::new(k, base.beta, base.metric)?;
            let assigner = RflaAssigner::new(points.to_vec(), hla);
            Ok(SweepEntry {
                value: k as f64,
                histogram: positives_per_interval(&assigner, cfg, par)?,
            })
        })
        .collect()
}

/// Reruns the two-stage assigner for each stage factor `beta`.
pub fn sweep_beta(
    betas: &[f64],
    points: &[crate::assignment::FeaturePoint],
    base: &HlaConfig,
    cfg: &TrialConfig,
    par: Parallelism,
) -> Result<Vec<SweepEntry>> {
    betas
        .iter()
        .map(|&beta| {
            let hla = HlaConfig::new(base.k, beta, base.metric)?;
            let assigner = RflaAssigner::new(points.to_vec(), hla);
            Ok(SweepEntry {
                value: beta,
                histogram: positives_per_interval(&assigner, cfg, par)?,
            })
        })
        .collect()
}

/// Reruns the IoU-threshold assigner with retiled anchors for each base
/// anchor scale, quantifying how sensitive the box prior is to its size.
pub fn sweep_anchor_scale(
    scales: &[f64],
    pyramid: &PyramidSpec,
    base: &AnchorSpec,
    cfg_iou: &MaxIouConfig,
    cfg: &TrialConfig,
    par: Parallelism,
) -> Result<Vec<SweepEntry>> {
    scales
        .iter()
        .map(|&scale| {
            let aspec = AnchorSpec::new(scale, base.ratios.clone())?;
            let anchors = generate_anchors(pyramid, &aspec)?;
            let assigner = MaxIouAssigner::new(anchors, *cfg_iou);
            Ok(SweepEntry {
                value: scale,
                histogram: positives_per_interval(&assigner, cfg, par)?,
            })
        })
        .collect()
}
