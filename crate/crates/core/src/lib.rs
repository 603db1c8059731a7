//! Label assignment for tiny-object detection built on Gaussian
//! receptive-field matching, together with the classic box- and
//! point-prior assigners and a deterministic simulation harness for
//! comparing them.
//!
//! # Building blocks
//!
//! - [`geometry`] – boxes, IoU and generalized IoU.
//! - [`gaussian`] – axis-aligned 2-D Gaussians with diagonal covariance.
//! - [`receptive_field`] – theoretical/effective receptive fields of
//!   convolution stacks and the feature-point grid of a pyramid.
//! - [`distances`] – Wasserstein / KL / GIoU distance kernels between the
//!   ERF Gaussian and a Gaussian-modelled gt, normalized to receptive
//!   field distance (RFD) scores in `(0, 1]`.
//! - [`hla`] – the two-stage hierarchical assigner over RFD scores.
//! - [`baselines`] – IoU-threshold anchors, center sampling, and the
//!   Gaussian-anchor / receptive-anchor hybrids.
//! - [`targets`] – LTRB regression targets and the outside-tolerant
//!   centerness.
//! - [`analysis`] – seeded Monte-Carlo harness measuring positives per gt
//!   across object scales, plus parameter sweeps.
//!
//! # Example
//!
//! ```
//! use rfla::prelude::*;
//!
//! let pyramid = PyramidSpec::approx_fpn(256, 256)?;
//! let points = build_grid(&pyramid)?;
//! let gt = BBox::new(100.0, 120.0, 14.0, 9.0)?;
//! let result = hla_assign(&points, &[gt], &HlaConfig::default());
//! assert_eq!(result.positive_count(0), 3);
//! # Ok::<(), rfla::Error>(())
//! ```

pub mod analysis;
pub mod assignment;
pub mod baselines;
pub mod distances;
mod error;
pub mod gaussian;
pub mod geometry;
pub mod hla;
pub mod receptive_field;
pub mod targets;

pub use error::{Error, Result};

/// The types and operations most callers need.
pub mod prelude {
    pub use crate::analysis::{
        positives_per_interval, random_gts, AspectMode, IntervalHistogram, Parallelism,
        TrialConfig,
    };
    pub use crate::assignment::{Assigner, AssignmentResult, FeaturePoint, Label, Stage};
    pub use crate::baselines::{
        center_sampling_assign, gaussian_anchor_assign, generate_anchors, maxiou_assign,
        receptive_anchor_assign, Anchor, AnchorSpec, MaxIouConfig, ScaleRanges,
    };
    pub use crate::distances::{
        gt_gaussian, kld, rfd, score_matrix, wasserstein2_sq, MetricKind, ScoreMatrix,
    };
    pub use crate::error::{Error, Result};
    pub use crate::gaussian::Gaussian2D;
    pub use crate::geometry::{bbox_area, giou, iou, BBox};
    pub use crate::hla::{hla_assign, stage_topk, HlaConfig, RflaAssigner};
    pub use crate::receptive_field::{
        build_grid, erf_gaussian, erf_radius, trf, ConvLayerSpec, ErfSource, PyramidLevelSpec,
        PyramidSpec,
    };
    pub use crate::targets::{centerness_star, ltrb, LtrbTarget};
}
