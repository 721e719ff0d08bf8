//! Density/color fields.
//!
//! A [`Field`] maps a point and a viewing direction to a density in
//! `[0, sigma_max]` and a color in `[0, 1]^3`. Density never depends on the
//! direction, and the analytic primitives are Lambertian, so the color does
//! not either.
//!
//! Every field exposes a flat parameter vector. The analytic primitives also
//! provide exact derivatives of density and color with respect to that vector,
//! which is what [`crate::fitting`] differentiates through.

mod encoding;
mod piecewise;
mod primitives;

use serde::{Deserialize, Serialize};

pub use encoding::positional_encoding;
pub use piecewise::PiecewiseConstantRayField;
pub use primitives::{
    Checker, ConstantField, Dome, GaussianBlobField, GroundPlaneField, SoftBoxField,
    SoftSphereField,
};

use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::Rgb;

/// Default density ceiling for analytic primitives.
pub const DEFAULT_SIGMA_MAX: f64 = 10.0;

/// Densities below this are floored before taking logarithms.
pub const DENSITY_LOG_FLOOR: f64 = 1e-12;

pub fn floored_log_density(sigma: f64) -> f64 {
    sigma.max(DENSITY_LOG_FLOOR).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub sigma: f64,
    pub color: Rgb,
}

/// A field sample together with its derivatives with respect to the field's
/// parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGradient {
    pub sample: FieldSample,
    pub d_sigma: Vec<f64>,
    pub d_color: [Vec<f64>; 3],
}

impl FieldGradient {
    fn zeros(sample: FieldSample, n: usize) -> Self {
        Self {
            sample,
            d_sigma: vec![0.0; n],
            d_color: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    GaussianBlob,
    SoftSphere,
    SoftBox,
    GroundPlane,
    Constant,
    PiecewiseRay,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::GaussianBlob => "gaussian_blob",
            FieldKind::SoftSphere => "soft_sphere",
            FieldKind::SoftBox => "soft_box",
            FieldKind::GroundPlane => "ground_plane",
            FieldKind::Constant => "constant",
            FieldKind::PiecewiseRay => "piecewise_ray",
        }
    }
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    GaussianBlob(GaussianBlobField),
    SoftSphere(SoftSphereField),
    SoftBox(SoftBoxField),
    GroundPlane(GroundPlaneField),
    Constant(ConstantField),
    PiecewiseRay(PiecewiseConstantRayField),
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        match self {
            Field::GaussianBlob(_) => FieldKind::GaussianBlob,
            Field::SoftSphere(_) => FieldKind::SoftSphere,
            Field::SoftBox(_) => FieldKind::SoftBox,
            Field::GroundPlane(_) => FieldKind::GroundPlane,
            Field::Constant(_) => FieldKind::Constant,
            Field::PiecewiseRay(_) => FieldKind::PiecewiseRay,
        }
    }

    pub fn eval(&self, x: &Vec3, d: &Vec3) -> Result<FieldSample> {
        check_inputs(x, d)?;
        Ok(match self {
            Field::GaussianBlob(f) => f.sample(x),
            Field::SoftSphere(f) => f.sample(x),
            Field::SoftBox(f) => f.sample(x),
            Field::GroundPlane(f) => f.sample(x),
            Field::Constant(f) => f.sample(),
            Field::PiecewiseRay(f) => f.sample(x),
        })
    }

    /// Density, color and their parameter derivatives at `x`.
    pub fn eval_gradient(&self, x: &Vec3, d: &Vec3) -> Result<FieldGradient> {
        check_inputs(x, d)?;
        match self {
            Field::GaussianBlob(f) => Ok(f.gradient(x)),
            Field::SoftSphere(f) => Ok(f.gradient(x)),
            Field::SoftBox(f) => Ok(f.gradient(x)),
            Field::GroundPlane(f) => Ok(f.gradient(x)),
            Field::Constant(f) => Ok(f.gradient()),
            Field::PiecewiseRay(_) => Err(Error::NotDifferentiable(FieldKind::PiecewiseRay.as_str())),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Field::PiecewiseRay(_))
    }

    pub fn param_count(&self) -> usize {
        match self {
            Field::GaussianBlob(_) => GaussianBlobField::PARAMS,
            Field::SoftSphere(_) => SoftSphereField::PARAMS,
            Field::SoftBox(_) => SoftBoxField::PARAMS,
            Field::GroundPlane(_) => GroundPlaneField::PARAMS,
            Field::Constant(_) => ConstantField::PARAMS,
            Field::PiecewiseRay(f) => f.param_count(),
        }
    }

    pub fn param_vector(&self) -> Vec<f64> {
        match self {
            Field::GaussianBlob(f) => f.params(),
            Field::SoftSphere(f) => f.params(),
            Field::SoftBox(f) => f.params(),
            Field::GroundPlane(f) => f.params(),
            Field::Constant(f) => f.params(),
            Field::PiecewiseRay(f) => f.params(),
        }
    }

    /// A copy of this field with its parameters replaced by `params`.
    pub fn set_params(&self, params: &[f64]) -> Result<Field> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::ParamLength {
                kind: self.kind().as_str(),
                expected,
                got: params.len(),
            });
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("field parameters"));
        }
        Ok(match self {
            Field::GaussianBlob(f) => Field::GaussianBlob(f.with_params(params)),
            Field::SoftSphere(f) => Field::SoftSphere(f.with_params(params)),
            Field::SoftBox(f) => Field::SoftBox(f.with_params(params)),
            Field::GroundPlane(f) => Field::GroundPlane(f.with_params(params)),
            Field::Constant(f) => Field::Constant(f.with_params(params)),
            Field::PiecewiseRay(f) => Field::PiecewiseRay(f.with_params(params)?),
        })
    }

    /// Clamps parameters back into their valid domain (positive sizes,
    /// non-negative amplitudes, colors in the unit cube).
    pub fn project(&mut self) {
        match self {
            Field::GaussianBlob(f) => f.project(),
            Field::SoftSphere(f) => f.project(),
            Field::SoftBox(f) => f.project(),
            Field::GroundPlane(f) => f.project(),
            Field::Constant(f) => f.project(),
            Field::PiecewiseRay(_) => {}
        }
    }

    /// Closed-form optical depth between `t0` and `t1` along `ray`, when the
    /// field admits one.
    pub fn exact_optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> Option<f64> {
        match self {
            Field::Constant(f) => Some(f.sample().sigma * (t1 - t0)),
            Field::PiecewiseRay(f) if f.follows(ray) => Some(f.optical_depth(t0, t1)),
            _ => None,
        }
    }

    pub fn center(&self) -> Option<Vec3> {
        match self {
            Field::GaussianBlob(f) => Some(f.center),
            Field::SoftSphere(f) => Some(f.center),
            Field::SoftBox(f) => Some(f.center),
            _ => None,
        }
    }

    pub fn base_color(&self) -> Option<Rgb> {
        match self {
            Field::GaussianBlob(f) => Some(f.color),
            Field::SoftSphere(f) => Some(f.color),
            Field::SoftBox(f) => Some(f.color),
            Field::GroundPlane(f) => Some(f.color),
            Field::Constant(f) => Some(f.color),
            Field::PiecewiseRay(_) => None,
        }
    }
}

fn check_inputs(x: &Vec3, d: &Vec3) -> Result<()> {
    if x.iter().chain(d.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("field evaluation point"))
    }
}

pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Clamps a raw density into `[0, sigma_max]`; the flag says whether the
/// derivative passes through.
pub(crate) fn clamp_density(raw: f64, sigma_max: f64) -> (f64, bool) {
    if raw < 0.0 {
        (0.0, false)
    } else if raw > sigma_max {
        (sigma_max, false)
    } else {
        (raw, true)
    }
}

pub(crate) fn clamp_color(c: Rgb) -> (Rgb, [bool; 3]) {
    let mut out = [0.0; 3];
    let mut pass = [false; 3];
    for k in 0..3 {
        out[k] = c[k].clamp(0.0, 1.0);
        pass[k] = (0.0..=1.0).contains(&c[k]);
    }
    (out, pass)
}

pub(crate) fn project_color(c: &mut Rgb) {
    for v in c.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}
