//! Analytic, differentiable density primitives.
//!
//! Soft-edged primitives put their density half-maximum exactly on the
//! geometric surface (sphere, box, ground plane), so ground truth can be
//! computed by ordinary ray intersection.

use serde::{Deserialize, Serialize};

use super::{
    clamp_color, clamp_density, logistic, project_color, FieldGradient, FieldSample,
    DEFAULT_SIGMA_MAX,
};
use crate::geometry::Vec3;
use crate::Rgb;

const MIN_SIZE: f64 = 1e-3;

fn vec3(p: &[f64]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

fn rgb(p: &[f64]) -> Rgb {
    [p[0], p[1], p[2]]
}

/// Fills the color part of a gradient: colors are stored directly as the
/// trailing three parameters.
fn color_gradient(g: &mut FieldGradient, color_offset: usize, pass: [bool; 3]) {
    for k in 0..3 {
        g.d_color[k][color_offset + k] = if pass[k] { 1.0 } else { 0.0 };
    }
}

/// `a * exp(-0.5 * sum(((x - c) / s)^2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBlobField {
    pub center: Vec3,
    pub scale: Vec3,
    pub amplitude: f64,
    pub color: Rgb,
    pub sigma_max: f64,
}

impl GaussianBlobField {
    pub const PARAMS: usize = 10;

    pub fn new(center: Vec3, scale: Vec3, amplitude: f64, color: Rgb) -> Self {
        Self {
            center,
            scale,
            amplitude,
            color,
            sigma_max: DEFAULT_SIGMA_MAX,
        }
    }

    /// Radii of the density half-maximum ellipsoid.
    pub fn half_max_radii(&self) -> Vec3 {
        self.scale * (2.0 * std::f64::consts::LN_2).sqrt()
    }

    fn raw(&self, x: &Vec3) -> (f64, f64, Vec3) {
        let q = (x - self.center).component_div(&self.scale);
        let g = (-0.5 * q.norm_squared()).exp();
        (self.amplitude * g, g, q)
    }

    pub(super) fn sample(&self, x: &Vec3) -> FieldSample {
        let (raw, _, _) = self.raw(x);
        FieldSample {
            sigma: clamp_density(raw, self.sigma_max).0,
            color: clamp_color(self.color).0,
        }
    }

    pub(super) fn gradient(&self, x: &Vec3) -> FieldGradient {
        let (raw, g, q) = self.raw(x);
        let (sigma, pass) = clamp_density(raw, self.sigma_max);
        let (color, cpass) = clamp_color(self.color);
        let mut out = FieldGradient::zeros(FieldSample { sigma, color }, Self::PARAMS);
        if pass {
            for k in 0..3 {
                out.d_sigma[k] = raw * q[k] / self.scale[k];
                out.d_sigma[3 + k] = raw * q[k] * q[k] / self.scale[k];
            }
            out.d_sigma[6] = g;
        }
        color_gradient(&mut out, 7, cpass);
        out
    }

    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(Self::PARAMS);
        p.extend(self.center.iter());
        p.extend(self.scale.iter());
        p.push(self.amplitude);
        p.extend(self.color);
        p
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Self {
        Self {
            center: vec3(&p[0..3]),
            scale: vec3(&p[3..6]),
            amplitude: p[6],
            color: rgb(&p[7..10]),
            sigma_max: self.sigma_max,
        }
    }

    pub(super) fn project(&mut self) {
        self.scale = self.scale.map(|s| s.max(MIN_SIZE));
        self.amplitude = self.amplitude.max(0.0);
        project_color(&mut self.color);
    }
}

/// `a * logistic((radius - |x - c|) / softness)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftSphereField {
    pub center: Vec3,
    pub radius: f64,
    pub softness: f64,
    pub amplitude: f64,
    pub color: Rgb,
    pub sigma_max: f64,
}

impl SoftSphereField {
    pub const PARAMS: usize = 9;

    pub(super) fn sample(&self, x: &Vec3) -> FieldSample {
        let rho = (x - self.center).norm();
        let s = logistic((self.radius - rho) / self.softness);
        FieldSample {
            sigma: clamp_density(self.amplitude * s, self.sigma_max).0,
            color: clamp_color(self.color).0,
        }
    }

    pub(super) fn gradient(&self, x: &Vec3) -> FieldGradient {
        let offset = x - self.center;
        let rho = offset.norm();
        let w = self.softness;
        let u = (self.radius - rho) / w;
        let s = logistic(u);
        let raw = self.amplitude * s;
        let (sigma, pass) = clamp_density(raw, self.sigma_max);
        let (color, cpass) = clamp_color(self.color);
        let mut out = FieldGradient::zeros(FieldSample { sigma, color }, Self::PARAMS);
        if pass {
            let d_u = self.amplitude * s * (1.0 - s);
            if rho > 0.0 {
                for k in 0..3 {
                    out.d_sigma[k] = d_u * offset[k] / (rho * w);
                }
            }
            out.d_sigma[3] = d_u / w;
            out.d_sigma[4] = -d_u * u / w;
            out.d_sigma[5] = s;
        }
        color_gradient(&mut out, 6, cpass);
        out
    }

    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(Self::PARAMS);
        p.extend(self.center.iter());
        p.extend([self.radius, self.softness, self.amplitude]);
        p.extend(self.color);
        p
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Self {
        Self {
            center: vec3(&p[0..3]),
            radius: p[3],
            softness: p[4],
            amplitude: p[5],
            color: rgb(&p[6..9]),
            sigma_max: self.sigma_max,
        }
    }

    pub(super) fn project(&mut self) {
        self.radius = self.radius.max(MIN_SIZE);
        self.softness = self.softness.max(MIN_SIZE);
        self.amplitude = self.amplitude.max(0.0);
        project_color(&mut self.color);
    }
}

/// Axis-aligned box: `a * logistic(-sdf(x) / softness)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftBoxField {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub softness: f64,
    pub amplitude: f64,
    pub color: Rgb,
    pub sigma_max: f64,
}

impl SoftBoxField {
    pub const PARAMS: usize = 11;

    /// Signed distance to the box and its derivative with respect to the
    /// per-axis excess `q_k = |p_k| - h_k`.
    fn sdf(&self, x: &Vec3) -> (f64, Vec3, Vec3) {
        let p = x - self.center;
        let q = p.abs() - self.half_extents;
        let outside = q.map(|v| v.max(0.0));
        let out_len = outside.norm();
        let mut d_q = Vec3::zeros();
        let inner;
        if out_len > 0.0 {
            d_q = outside / out_len;
            inner = 0.0;
        } else {
            let k = q.imax();
            inner = q[k].min(0.0);
            d_q[k] = 1.0;
        }
        (out_len + inner, d_q, p)
    }

    pub(super) fn sample(&self, x: &Vec3) -> FieldSample {
        let (sdf, _, _) = self.sdf(x);
        let s = logistic(-sdf / self.softness);
        FieldSample {
            sigma: clamp_density(self.amplitude * s, self.sigma_max).0,
            color: clamp_color(self.color).0,
        }
    }

    pub(super) fn gradient(&self, x: &Vec3) -> FieldGradient {
        let (sdf, d_q, p) = self.sdf(x);
        let w = self.softness;
        let u = -sdf / w;
        let s = logistic(u);
        let raw = self.amplitude * s;
        let (sigma, pass) = clamp_density(raw, self.sigma_max);
        let (color, cpass) = clamp_color(self.color);
        let mut out = FieldGradient::zeros(FieldSample { sigma, color }, Self::PARAMS);
        if pass {
            let d_u = self.amplitude * s * (1.0 - s);
            for k in 0..3 {
                let sign = if p[k] > 0.0 {
                    1.0
                } else if p[k] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                // d sdf / d c_k = -sign(p_k) dq_k ; d sdf / d h_k = -dq_k ; du = -dsdf / w
                out.d_sigma[k] = d_u * sign * d_q[k] / w;
                out.d_sigma[3 + k] = d_u * d_q[k] / w;
            }
            out.d_sigma[6] = -d_u * u / w;
            out.d_sigma[7] = s;
        }
        color_gradient(&mut out, 8, cpass);
        out
    }

    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(Self::PARAMS);
        p.extend(self.center.iter());
        p.extend(self.half_extents.iter());
        p.extend([self.softness, self.amplitude]);
        p.extend(self.color);
        p
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Self {
        Self {
            center: vec3(&p[0..3]),
            half_extents: vec3(&p[3..6]),
            softness: p[6],
            amplitude: p[7],
            color: rgb(&p[8..11]),
            sigma_max: self.sigma_max,
        }
    }

    pub(super) fn project(&mut self) {
        self.half_extents = self.half_extents.map(|h| h.max(MIN_SIZE));
        self.softness = self.softness.max(MIN_SIZE);
        self.amplitude = self.amplitude.max(0.0);
        project_color(&mut self.color);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checker {
    /// Edge length of one checker square in world units.
    pub size: f64,
    /// Color of the odd squares; the field color fills the even ones.
    pub color: Rgb,
}

/// Inside-out sphere enclosing the scene, sharing the ground plane's softness
/// and amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dome {
    pub center: Vec3,
    pub radius: f64,
}

/// Half-space below `z = height` (softened over `softness`), optionally
/// united with a distant dome so every ray terminates.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundPlaneField {
    pub height: f64,
    pub softness: f64,
    pub amplitude: f64,
    pub color: Rgb,
    pub checker: Option<Checker>,
    pub dome: Option<Dome>,
    pub sigma_max: f64,
}

impl GroundPlaneField {
    pub const PARAMS: usize = 6;

    /// Occupancy in [0, 1] plus d/du for the ground and dome terms.
    fn occupancy(&self, x: &Vec3) -> (f64, f64, f64, f64, f64) {
        let w = self.softness;
        let u_g = (self.height - x.z) / w;
        let s_g = logistic(u_g);
        let (u_d, s_d) = match &self.dome {
            Some(dome) => {
                let u = ((x - dome.center).norm() - dome.radius) / w;
                (u, logistic(u))
            }
            None => (0.0, 0.0),
        };
        let s = s_g + s_d - s_g * s_d;
        let ds_dug = (1.0 - s_d) * s_g * (1.0 - s_g);
        let ds_dud = if self.dome.is_some() {
            (1.0 - s_g) * s_d * (1.0 - s_d)
        } else {
            0.0
        };
        (s, u_g, ds_dug, u_d, ds_dud)
    }

    fn on_odd_square(&self, x: &Vec3) -> Option<Rgb> {
        let checker = self.checker.as_ref()?;
        let i = (x.x / checker.size).floor() as i64 + (x.y / checker.size).floor() as i64;
        (i.rem_euclid(2) == 1).then_some(checker.color)
    }

    pub(super) fn sample(&self, x: &Vec3) -> FieldSample {
        let (s, ..) = self.occupancy(x);
        let color = self.on_odd_square(x).unwrap_or(self.color);
        FieldSample {
            sigma: clamp_density(self.amplitude * s, self.sigma_max).0,
            color: clamp_color(color).0,
        }
    }

    pub(super) fn gradient(&self, x: &Vec3) -> FieldGradient {
        let (s, u_g, ds_dug, u_d, ds_dud) = self.occupancy(x);
        let w = self.softness;
        let raw = self.amplitude * s;
        let (sigma, pass) = clamp_density(raw, self.sigma_max);
        let odd = self.on_odd_square(x);
        let (color, cpass) = clamp_color(odd.unwrap_or(self.color));
        let mut out = FieldGradient::zeros(FieldSample { sigma, color }, Self::PARAMS);
        if pass {
            let a = self.amplitude;
            out.d_sigma[0] = a * ds_dug / w;
            out.d_sigma[1] = -a * (ds_dug * u_g + ds_dud * u_d) / w;
            out.d_sigma[2] = s;
        }
        if odd.is_none() {
            color_gradient(&mut out, 3, cpass);
        }
        out
    }

    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = vec![self.height, self.softness, self.amplitude];
        p.extend(self.color);
        p
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Self {
        Self {
            height: p[0],
            softness: p[1],
            amplitude: p[2],
            color: rgb(&p[3..6]),
            ..self.clone()
        }
    }

    pub(super) fn project(&mut self) {
        self.softness = self.softness.max(MIN_SIZE);
        self.amplitude = self.amplitude.max(0.0);
        project_color(&mut self.color);
    }
}

/// Homogeneous medium filling all of space.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField {
    pub sigma: f64,
    pub color: Rgb,
    pub sigma_max: f64,
}

impl ConstantField {
    pub const PARAMS: usize = 4;

    pub fn new(sigma: f64, color: Rgb) -> Self {
        Self {
            sigma,
            color,
            sigma_max: DEFAULT_SIGMA_MAX,
        }
    }

    pub(super) fn sample(&self) -> FieldSample {
        FieldSample {
            sigma: clamp_density(self.sigma, self.sigma_max).0,
            color: clamp_color(self.color).0,
        }
    }

    pub(super) fn gradient(&self) -> FieldGradient {
        let (sigma, pass) = clamp_density(self.sigma, self.sigma_max);
        let (color, cpass) = clamp_color(self.color);
        let mut out = FieldGradient::zeros(FieldSample { sigma, color }, Self::PARAMS);
        out.d_sigma[0] = if pass { 1.0 } else { 0.0 };
        color_gradient(&mut out, 1, cpass);
        out
    }

    pub(super) fn params(&self) -> Vec<f64> {
        vec![self.sigma, self.color[0], self.color[1], self.color[2]]
    }

    pub(super) fn with_params(&self, p: &[f64]) -> Self {
        Self {
            sigma: p[0],
            color: rgb(&p[1..4]),
            sigma_max: self.sigma_max,
        }
    }

    pub(super) fn project(&mut self) {
        self.sigma = self.sigma.max(0.0);
        project_color(&mut self.color);
    }
}
