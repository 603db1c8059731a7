//! Axis-aligned 2-D Gaussian, the shared representation of both the
//! effective receptive field of a feature point and a Gaussian-modelled
//! ground-truth box.

use crate::error::{Error, Result};

/// A 2-D Gaussian with diagonal covariance: mean `(mu_x, mu_y)` in pixels
/// and variances `(var_x, var_y)` in pixels².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
}

impl Gaussian2D {
    pub fn new(mu_x: f64, mu_y: f64, var_x: f64, var_y: f64) -> Result<Self> {
        if !(mu_x.is_finite() && mu_y.is_finite() && var_x.is_finite() && var_y.is_finite()) {
            return Err(Error::InvalidGaussian(format!(
                "non-finite field in (mu=({mu_x}, {mu_y}), var=({var_x}, {var_y}))"
            )));
        }
        if var_x <= 0.0 || var_y <= 0.0 {
            return Err(Error::InvalidGaussian(format!(
                "variances must be > 0, got ({var_x}, {var_y})"
            )));
        }
        Ok(Self {
            mu_x,
            mu_y,
            var_x,
            var_y,
        })
    }

    /// Isotropic Gaussian with standard deviation `sigma` on both axes.
    pub fn isotropic(mu_x: f64, mu_y: f64, sigma: f64) -> Result<Self> {
        Self::new(mu_x, mu_y, sigma * sigma, sigma * sigma)
    }

    pub fn mu_x(&self) -> f64 {
        self.mu_x
    }

    pub fn mu_y(&self) -> f64 {
        self.mu_y
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn var_y(&self) -> f64 {
        self.var_y
    }

    pub fn sigma_x(&self) -> f64 {
        self.var_x.sqrt()
    }

    pub fn sigma_y(&self) -> f64 {
        self.var_y.sqrt()
    }

    /// The Gaussian with mean and standard deviations multiplied by `s`.
    /// Used by the stage decay of the hierarchical assigner (mean kept,
    /// see [`scale_sigma`](Self::scale_sigma)) and by scale-invariance tests.
    pub fn scale_all(&self, s: f64) -> Result<Self> {
        let sx = self.sigma_x() * s;
        let sy = self.sigma_y() * s;
        Self::new(self.mu_x * s, self.mu_y * s, sx * sx, sy * sy)
    }

    /// Same location, standard deviations multiplied by `s`.
    pub fn scale_sigma(&self, s: f64) -> Result<Self> {
        let sx = self.sigma_x() * s;
        let sy = self.sigma_y() * s;
        Self::new(self.mu_x, self.mu_y, sx * sx, sy * sy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_variance() {
        assert!(Gaussian2D::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Gaussian2D::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(Gaussian2D::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sigma_recovers_the_isotropic_radius() {
        let g = Gaussian2D::isotropic(8.0, 8.0, 4.0).unwrap();
        assert_eq!(g.var_x(), 16.0);
        assert_eq!(g.sigma_x(), 4.0);
        assert_eq!(g.sigma_y(), 4.0);
    }

    #[test]
    fn scale_sigma_keeps_the_mean() {
        let g = Gaussian2D::new(3.0, -1.0, 4.0, 9.0).unwrap();
        let d = g.scale_sigma(0.5).unwrap();
        assert_eq!(d.mu_x(), 3.0);
        assert_eq!(d.mu_y(), -1.0);
        assert_eq!(d.sigma_x(), 1.0);
        assert_eq!(d.sigma_y(), 1.5);
    }
}
