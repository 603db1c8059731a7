//! Receptive-field computation and feature-grid construction.
//!
//! A stack of convolutions with kernels `k_n` and strides `s_n` has a
//! theoretical receptive field (TRF) that grows by the recursion
//!
//! ```text
//! tr_0 = 1,    tr_n = tr_{n-1} + (k_n - 1) * s_1 * s_2 * ... * s_{n-1}
//! ```
//!
//! The effective receptive field (ERF) only occupies the central part of
//! the TRF and is modelled as an isotropic 2-D Gaussian centered on the
//! feature point with standard deviation `er = tr / 2`.

use crate::assignment::FeaturePoint;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2D;

/// One convolution (or pooling) layer: kernel size and stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub kernel: u64,
    pub stride: u64,
}

impl ConvLayerSpec {
    pub fn new(kernel: u64, stride: u64) -> Result<Self> {
        if kernel < 1 || stride < 1 {
            return Err(Error::InvalidPyramid(format!(
                "kernel and stride must be >= 1, got k={kernel}, s={stride}"
            )));
        }
        Ok(Self { kernel, stride })
    }
}

/// Where a pyramid level gets its ERF radius from: either derived from a
/// convolution stack reaching that level, or given explicitly.
#[derive(Debug, Clone, PartialEq)]
pub enum ErfSource {
    ConvStack(Vec<ConvLayerSpec>),
    ExplicitRadius(f64),
}

/// One feature-pyramid level: cumulative stride plus its ERF source.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevelSpec {
    pub stride: u64,
    pub erf_source: ErfSource,
}

impl PyramidLevelSpec {
    pub fn new(stride: u64, erf_source: ErfSource) -> Result<Self> {
        if stride < 1 {
            return Err(Error::InvalidPyramid(format!(
                "level stride must be >= 1, got {stride}"
            )));
        }
        match &erf_source {
            ErfSource::ConvStack(stack) => {
                let mut prod: u64 = 1;
                for layer in stack {
                    ConvLayerSpec::new(layer.kernel, layer.stride)?;
                    prod = prod.checked_mul(layer.stride).ok_or_else(|| {
                        Error::InvalidPyramid("stride product overflows".into())
                    })?;
                }
                if prod != stride {
                    return Err(Error::InvalidPyramid(format!(
                        "conv stack stride product {prod} does not match level stride {stride}"
                    )));
                }
            }
            ErfSource::ExplicitRadius(er) => {
                if !(er.is_finite() && *er > 0.0) {
                    return Err(Error::InvalidPyramid(format!(
                        "explicit ERF radius must be > 0, got {er}"
                    )));
                }
            }
        }
        Ok(Self { stride, erf_source })
    }

    /// ERF radius of this level.
    pub fn er(&self) -> Result<f64> {
        match &self.erf_source {
            ErfSource::ConvStack(stack) => {
                let trs = trf(stack)?;
                Ok(erf_radius(*trs.last().expect("stack is non-empty") as f64))
            }
            ErfSource::ExplicitRadius(er) => Ok(*er),
        }
    }
}

/// Declarative description of a feature pyramid over an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidSpec {
    pub image_w: u64,
    pub image_h: u64,
    pub levels: Vec<PyramidLevelSpec>,
    /// Grid centers sit at `(i + center_offset) * stride`; the usual
    /// convention is half a stride. Must lie in `[0, 1)`.
    pub center_offset: f64,
}

impl PyramidSpec {
    pub fn new(image_w: u64, image_h: u64, levels: Vec<PyramidLevelSpec>) -> Result<Self> {
        Self::with_offset(image_w, image_h, levels, 0.5)
    }

    pub fn with_offset(
        image_w: u64,
        image_h: u64,
        levels: Vec<PyramidLevelSpec>,
        center_offset: f64,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidPyramid("at least one level required".into()));
        }
        if !(0.0..1.0).contains(&center_offset) {
            return Err(Error::InvalidPyramid(format!(
                "center offset must lie in [0, 1), got {center_offset}"
            )));
        }
        for pair in levels.windows(2) {
            if pair[1].stride <= pair[0].stride {
                return Err(Error::InvalidPyramid(format!(
                    "level strides must be strictly increasing, got {} then {}",
                    pair[0].stride, pair[1].stride
                )));
            }
        }
        Ok(Self {
            image_w,
            image_h,
            levels,
            center_offset,
        })
    }

    /// Five-level pyramid with strides {4, 8, 16, 32, 64} and ERF radii
    /// derived from an illustrative convolution stack: a 7x7/2 stem with
    /// 3x3/2 pooling, then per stage one strided 3x3 followed by two 3x3s
    /// (roughly one residual block per stage), and a final strided 3x3
    /// for the coarsest level.
    ///
    /// This is an approximation for experimentation, not a claim about
    /// any particular backbone; pass explicit radii to override.
    pub fn approx_fpn(image_w: u64, image_h: u64) -> Result<Self> {
        let l = |k: u64, s: u64| ConvLayerSpec { kernel: k, stride: s };
        let mut stack = vec![l(7, 2), l(3, 2), l(3, 1), l(3, 1)];
        let mut levels = vec![PyramidLevelSpec::new(4, ErfSource::ConvStack(stack.clone()))?];
        for stride in [8u64, 16, 32] {
            stack.extend([l(3, 2), l(3, 1), l(3, 1)]);
            levels.push(PyramidLevelSpec::new(
                stride,
                ErfSource::ConvStack(stack.clone()),
            )?);
        }
        stack.push(l(3, 2));
        levels.push(PyramidLevelSpec::new(64, ErfSource::ConvStack(stack))?);
        Self::new(image_w, image_h, levels)
    }
}

/// Theoretical receptive field after each layer of a convolution stack.
///
/// Returns one value per layer, non-decreasing, all >= 1. An empty stack
/// is a validation error.
pub fn trf(stack: &[ConvLayerSpec]) -> Result<Vec<u64>> {
    if stack.is_empty() {
        return Err(Error::InvalidPyramid(
            "cannot compute the receptive field of an empty stack".into(),
        ));
    }
    let overflow = || Error::InvalidPyramid("receptive field computation overflows".into());
    let mut out = Vec::with_capacity(stack.len());
    let mut tr: u64 = 1;
    let mut stride_prod: u64 = 1;
    for layer in stack {
        ConvLayerSpec::new(layer.kernel, layer.stride)?;
        let growth = (layer.kernel - 1).checked_mul(stride_prod).ok_or_else(overflow)?;
        tr = tr.checked_add(growth).ok_or_else(overflow)?;
        stride_prod = stride_prod.checked_mul(layer.stride).ok_or_else(overflow)?;
        out.push(tr);
    }
    Ok(out)
}

/// ERF radius approximated as half of the final TRF extent.
pub fn erf_radius(trf_final: f64) -> f64 {
    trf_final / 2.0
}

/// The ERF of a feature point as an isotropic Gaussian: mean at the point
/// center, variance `er²` on both axes.
pub fn erf_gaussian(p: &FeaturePoint) -> Gaussian2D {
    Gaussian2D::new(p.px, p.py, p.er * p.er, p.er * p.er)
        .expect("feature point invariants guarantee a valid gaussian")
}

/// Materializes the feature-point grid of a pyramid.
///
/// Per level every cell that fully fits the image yields one point at
/// `((i + offset) * stride, (j + offset) * stride)`, row-major; levels
/// are concatenated in order and `flat_id` equals the position in the
/// returned vector. A level coarser than the image contributes no points.
pub fn build_grid(spec: &PyramidSpec) -> Result<Vec<FeaturePoint>> {
    let mut points = Vec::new();
    let mut flat_id = 0usize;
    for (level, lspec) in spec.levels.iter().enumerate() {
        let er = lspec.er()?;
        let stride = lspec.stride as f64;
        let nx = spec.image_w / lspec.stride;
        let ny = spec.image_h / lspec.stride;
        for j in 0..ny {
            for i in 0..nx {
                let px = (i as f64 + spec.center_offset) * stride;
                let py = (j as f64 + spec.center_offset) * stride;
                points.push(FeaturePoint::new(level, px, py, er, flat_id)?);
                flat_id += 1;
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(k: u64, s: u64) -> ConvLayerSpec {
        ConvLayerSpec::new(k, s).unwrap()
    }

    #[test]
    fn trf_of_identity_conv() {
        assert_eq!(trf(&[layer(1, 1)]).unwrap(), vec![1]);
    }

    #[test]
    fn trf_recursion_with_strides() {
        // tr1 = 1 + 6*1 = 7; tr2 = 7 + 2*2 = 11; tr3 = 11 + 2*4 = 19.
        let stack = [layer(7, 2), layer(3, 2), layer(3, 1)];
        assert_eq!(trf(&stack).unwrap(), vec![7, 11, 19]);
    }

    #[test]
    fn trf_of_stride_one_stack_grows_by_kernel_minus_one() {
        let stack = [layer(3, 1), layer(3, 1), layer(3, 1)];
        assert_eq!(trf(&stack).unwrap(), vec![3, 5, 7]);
    }

    #[test]
    fn trf_rejects_empty_stack() {
        assert!(trf(&[]).is_err());
    }

    #[test]
    fn erf_radius_halves() {
        assert_eq!(erf_radius(19.0), 9.5);
        assert_eq!(erf_radius(1.0), 0.5);
        assert_eq!(erf_radius(212.0), 106.0);
    }

    #[test]
    fn erf_gaussian_squares_the_radius() {
        let p = FeaturePoint::new(0, 8.0, 8.0, 4.0, 0).unwrap();
        let g = erf_gaussian(&p);
        assert_eq!((g.mu_x(), g.mu_y()), (8.0, 8.0));
        assert_eq!((g.var_x(), g.var_y()), (16.0, 16.0));

        let p = FeaturePoint::new(0, 0.0, 0.0, 0.5, 1).unwrap();
        let g = erf_gaussian(&p);
        assert_eq!((g.var_x(), g.var_y()), (0.25, 0.25));

        let p = FeaturePoint::new(2, 100.0, 36.0, 9.5, 2).unwrap();
        let g = erf_gaussian(&p);
        assert_eq!((g.mu_x(), g.mu_y()), (100.0, 36.0));
        assert_eq!((g.var_x(), g.var_y()), (90.25, 90.25));
    }

    #[test]
    fn grid_for_single_level() {
        let spec = PyramidSpec::new(
            16,
            16,
            vec![PyramidLevelSpec::new(8, ErfSource::ExplicitRadius(4.0)).unwrap()],
        )
        .unwrap();
        let pts = build_grid(&spec).unwrap();
        let got: Vec<(f64, f64)> = pts.iter().map(|p| (p.px, p.py)).collect();
        assert_eq!(got, vec![(4.0, 4.0), (12.0, 4.0), (4.0, 12.0), (12.0, 12.0)]);
        assert!(pts.iter().all(|p| p.er == 4.0 && p.level == 0));
        let ids: Vec<usize> = pts.iter().map(|p| p.flat_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn grid_coarser_than_image_is_empty() {
        let spec = PyramidSpec::new(
            8,
            8,
            vec![PyramidLevelSpec::new(16, ErfSource::ExplicitRadius(8.0)).unwrap()],
        )
        .unwrap();
        assert!(build_grid(&spec).unwrap().is_empty());
    }

    #[test]
    fn grid_for_non_square_image() {
        let spec = PyramidSpec::new(
            16,
            8,
            vec![PyramidLevelSpec::new(8, ErfSource::ExplicitRadius(4.0)).unwrap()],
        )
        .unwrap();
        let pts = build_grid(&spec).unwrap();
        let got: Vec<(f64, f64)> = pts.iter().map(|p| (p.px, p.py)).collect();
        assert_eq!(got, vec![(4.0, 4.0), (12.0, 4.0)]);
    }

    #[test]
    fn conv_stack_stride_mismatch_is_rejected() {
        let res = PyramidLevelSpec::new(8, ErfSource::ConvStack(vec![layer(7, 2), layer(3, 2)]));
        assert!(res.is_err());
    }

    #[test]
    fn strides_must_increase() {
        let l8 = PyramidLevelSpec::new(8, ErfSource::ExplicitRadius(4.0)).unwrap();
        assert!(PyramidSpec::new(64, 64, vec![l8.clone(), l8]).is_err());
    }

    #[test]
    fn approx_fpn_levels_and_radii() {
        let spec = PyramidSpec::approx_fpn(800, 800).unwrap();
        let strides: Vec<u64> = spec.levels.iter().map(|l| l.stride).collect();
        assert_eq!(strides, vec![4, 8, 16, 32, 64]);
        // Radii come straight from the stack recursion; spot-check the first:
        // trf = [7, 11, 19, 27] -> er = 13.5.
        assert_eq!(spec.levels[0].er().unwrap(), 13.5);
        let ers: Vec<f64> = spec.levels.iter().map(|l| l.er().unwrap()).collect();
        assert!(ers.windows(2).all(|w| w[0] < w[1]));
    }
}
