//! Rays, pinhole cameras and the three-view camera rig.
//!
//! World frame is z-up with the ground plane at `z = 0`. Rays that descend
//! are cut off where they cross [`FLOOR_CLIP_Z`], so nothing below the
//! ground is ever queried.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Height of the plane below which rays are never marched.
pub const FLOOR_CLIP_Z: f64 = -0.1;

/// Default integration cutoff for rendered rays.
pub const DEFAULT_T_FAR: f64 = 40.0;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_far: f64,
}

impl Ray {
    /// Builds a ray, normalising `direction`.
    pub fn new(origin: Vec3, direction: Vec3, t_far: f64) -> Result<Self> {
        if !origin.iter().all(|v| v.is_finite()) || !direction.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ray"));
        }
        let norm = direction.norm();
        if norm == 0.0 {
            return Err(Error::InvalidRay("zero direction".into()));
        }
        if !(t_far > 0.0) || !t_far.is_finite() {
            return Err(Error::InvalidRay(format!("t_far must be positive, got {t_far}")));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        ray_at(self, t)
    }

    /// Same ray with a different cutoff.
    pub fn with_t_far(&self, t_far: f64) -> Self {
        Self { t_far, ..*self }
    }

    pub fn is_unit(&self) -> bool {
        (self.direction.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }
}

pub fn ray_at(ray: &Ray, t: f64) -> Vec3 {
    ray.origin + ray.direction * t
}

/// Cutoff after clipping against the floor plane.
pub fn clipped_t_far(origin: &Vec3, direction: &Vec3, t_far: f64) -> f64 {
    if direction.z < 0.0 && origin.z > FLOOR_CLIP_Z {
        let t_hit = (origin.z - FLOOR_CLIP_Z) / -direction.z;
        t_far.min(t_hit)
    } else {
        t_far
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .position
            .iter()
            .chain(self.look_at.iter())
            .chain(self.up.iter())
            .all(|v| v.is_finite());
        if !finite || !self.vertical_fov.is_finite() {
            return Err(Error::NonFinite("camera"));
        }
        if self.position == self.look_at {
            return Err(Error::DegenerateCamera("position equals look_at".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(Error::DegenerateCamera(format!(
                "vertical fov {} outside (0, pi)",
                self.vertical_fov
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateCamera("empty image".into()));
        }
        Ok(())
    }

    /// Orthonormal (right, up, forward) frame.
    fn frame(&self) -> Result<(Vec3, Vec3, Vec3)> {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up);
        let right_norm = right.norm();
        if right_norm < 1e-12 * self.up.norm().max(1.0) {
            return Err(Error::DegenerateCamera(
                "up vector parallel to view direction".into(),
            ));
        }
        let right = right / right_norm;
        let up = right.cross(&forward);
        Ok((right, up, forward))
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// One ray per pixel center, row-major from the top-left pixel.
///
/// Every ray is clipped against the floor plane in addition to `t_far`.
pub fn pinhole_rays(camera: &Camera, t_far: f64) -> Result<Vec<Ray>> {
    camera.validate()?;
    let (right, up, forward) = camera.frame()?;
    let half_h = (camera.vertical_fov * 0.5).tan();
    let aspect = camera.width as f64 / camera.height as f64;
    let half_w = half_h * aspect;

    let mut rays = Vec::with_capacity(camera.pixel_count());
    for row in 0..camera.height {
        let v = 1.0 - 2.0 * (row as f64 + 0.5) / camera.height as f64;
        for col in 0..camera.width {
            let u = 2.0 * (col as f64 + 0.5) / camera.width as f64 - 1.0;
            let dir = (forward + right * (u * half_w) + up * (v * half_h)).normalize();
            let far = clipped_t_far(&camera.position, &dir, t_far);
            rays.push(Ray::new(camera.position, dir, far)?);
        }
    }
    Ok(rays)
}

/// The base camera plus copies rotated by 120 and 240 degrees about the world z-axis.
pub fn rig_views(base: &Camera) -> [Camera; 3] {
    let rotate = |degrees: f64| {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), degrees.to_radians());
        Camera {
            position: rot * base.position,
            ..*base
        }
    };
    [*base, rotate(120.0), rotate(240.0)]
}
