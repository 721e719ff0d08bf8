use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::Rgb;

use super::FieldSample;

/// Density and color that are piecewise constant in the distance along a
/// designated ray.
///
/// Interval `j` covers `[breakpoints[j], breakpoints[j + 1])`; the last one
/// extends to infinity. Points are mapped to the designated ray by
/// orthogonal projection. Densities are not clamped, which is the point of
/// this field: it reproduces thin, very dense volumes exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantRayField {
    pub origin: Vec3,
    pub direction: Vec3,
    breakpoints: Vec<f64>,
    sigmas: Vec<f64>,
    colors: Vec<Rgb>,
}

impl PiecewiseConstantRayField {
    pub fn new(
        origin: Vec3,
        direction: Vec3,
        breakpoints: Vec<f64>,
        sigmas: Vec<f64>,
        colors: Vec<Rgb>,
    ) -> Result<Self> {
        let m = breakpoints.len();
        if m == 0 || sigmas.len() != m || colors.len() != m {
            return Err(Error::InvalidConfig(format!(
                "piecewise field needs matching breakpoints/sigmas/colors, got {}/{}/{}",
                m,
                sigmas.len(),
                colors.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("densities must be finite and >= 0".into()));
        }
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidRay("zero direction".into()));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
            breakpoints,
            sigmas,
            colors,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn intervals(&self) -> usize {
        self.breakpoints.len()
    }

    /// Whether `ray` coincides with the designated ray.
    pub fn follows(&self, ray: &Ray) -> bool {
        (ray.origin - self.origin).norm() <= 1e-12 && (ray.direction - self.direction).norm() <= 1e-12
    }

    pub fn ray(&self, t_far: f64) -> Ray {
        Ray {
            origin: self.origin,
            direction: self.direction,
            t_far,
        }
    }

    fn interval_of(&self, t: f64) -> usize {
        // Last index j with breakpoints[j] <= t; negative t maps to the first interval.
        self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1)
    }

    pub fn at_depth(&self, t: f64) -> FieldSample {
        let j = self.interval_of(t);
        FieldSample {
            sigma: self.sigmas[j],
            color: self.colors[j],
        }
    }

    pub(super) fn sample(&self, x: &Vec3) -> FieldSample {
        self.at_depth((x - self.origin).dot(&self.direction))
    }

    /// Exact `integral of sigma` over `[t0, t1]` along the designated ray.
    pub fn optical_depth(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut total = 0.0;
        for j in 0..self.breakpoints.len() {
            let lo = self.breakpoints[j].max(t0);
            let hi = self.breakpoints.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t1);
            if hi > lo {
                total += self.sigmas[j] * (hi - lo);
            }
        }
        total
    }

    pub(super) fn param_count(&self) -> usize {
        5 * self.breakpoints.len()
    }

    /// Breakpoints, then densities, then colors (three per interval).
    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = self.breakpoints.clone();
        p.extend(&self.sigmas);
        for c in &self.colors {
            p.extend(c);
        }
        p
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Result<Self> {
        let m = self.breakpoints.len();
        let colors = p[2 * m..].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(
            self.origin,
            self.direction,
            p[..m].to_vec(),
            p[m..2 * m].to_vec(),
            colors,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab() -> PiecewiseConstantRayField {
        PiecewiseConstantRayField::new(
            Vec3::zeros(),
            Vec3::z(),
            vec![0.0, 50.0, 51.0, 80.0],
            vec![0.0, 100.0, 0.0, 10.0],
            vec![[0.0; 3], [1.0; 3], [0.0; 3], [0.0; 3]],
        )
        .unwrap()
    }

    #[test]
    fn lookup_by_depth() {
        let f = slab();
        assert_eq!(f.at_depth(50.5).sigma, 100.0);
        assert_eq!(f.at_depth(50.5).color, [1.0; 3]);
        assert_eq!(f.at_depth(10.0).sigma, 0.0);
        assert_eq!(f.at_depth(500.0).sigma, 10.0);
        assert_eq!(f.sample(&Vec3::new(3.0, -2.0, 50.5)).sigma, 100.0);
    }

    #[test]
    fn exact_optical_depth() {
        let f = slab();
        assert_eq!(f.optical_depth(0.0, 51.0), 100.0);
        assert_eq!(f.optical_depth(0.0, 80.0), 100.0);
        assert_eq!(f.optical_depth(0.0, 81.0), 110.0);
        assert_eq!(f.optical_depth(50.25, 50.75), 50.0);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0, 1.0], vec![1.0], vec![[0.0; 3]]).is_err());
        assert!(PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0, 0.0], vec![1.0, 1.0], vec![[0.0; 3]; 2]).is_err());
        assert!(PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0], vec![-1.0], vec![[0.0; 3]]).is_err());
    }
}
