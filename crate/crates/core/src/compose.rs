//! Superposition of fields.
//!
//! Independent Poisson processes superpose into one whose rate is the sum of
//! the component rates, so the composite transmittance is the product of the
//! component transmittances and the first event at depth `t` belongs to
//! component `i` with density `p(t, i) = sigma_i(r(t)) T(t)`. Colors are
//! blended per point by the component responsibilities `sigma_i / sigma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry::{pinhole_rays, Camera, Ray, Vec3};
use crate::rng::stream_rng;
use crate::transport::{
    trace_hierarchical, transmittance, Medium, MediumPoint, QuadratureConfig, Trace,
};
use crate::Rgb;

/// Color reported where no component has density.
pub const NEUTRAL_COLOR: Rgb = [0.5, 0.5, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeScene {
    pub components: Vec<Field>,
    pub t_far: f64,
}

impl CompositeScene {
    pub fn new(components: Vec<Field>, t_far: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("a scene needs at least one component".into()));
        }
        if !(t_far > 0.0 && t_far.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_far must be positive, got {t_far}")));
        }
        Ok(Self { components, t_far })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Scene holding only component `i`, used for per-slot renders.
    pub fn slot(&self, i: usize) -> CompositeScene {
        CompositeScene {
            components: vec![self.components[i].clone()],
            t_far: self.t_far,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSample {
    pub sigma: f64,
    pub sigmas: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub color: Rgb,
    /// No component has density here; `color` is [`NEUTRAL_COLOR`].
    pub empty: bool,
}

impl CompositeSample {
    /// `sigma_i / sigma`, or zeros where the total density vanishes.
    pub fn responsibilities(&self) -> Vec<f64> {
        if self.empty {
            return vec![0.0; self.sigmas.len()];
        }
        self.sigmas.iter().map(|s| s / self.sigma).collect()
    }
}

impl MediumPoint for CompositeSample {
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn color(&self) -> Rgb {
        self.color
    }
}

pub fn composite_eval(scene: &CompositeScene, x: &Vec3, d: &Vec3) -> Result<CompositeSample> {
    let mut sigmas = Vec::with_capacity(scene.len());
    let mut colors = Vec::with_capacity(scene.len());
    for field in &scene.components {
        let s = field.eval(x, d)?;
        sigmas.push(s.sigma);
        colors.push(s.color);
    }
    let sigma = sigmas.iter().skip(1).fold(sigmas[0], |acc, s| acc + s);
    if !(sigma > 0.0) {
        return Ok(CompositeSample {
            sigma: 0.0,
            sigmas,
            colors,
            color: NEUTRAL_COLOR,
            empty: true,
        });
    }
    let mut color = [0.0; 3];
    for (s, c) in sigmas.iter().zip(&colors) {
        let r = s / sigma;
        for k in 0..3 {
            color[k] += c[k] * r;
        }
    }
    Ok(CompositeSample {
        sigma,
        sigmas,
        colors,
        color,
        empty: false,
    })
}

impl Medium for CompositeScene {
    type Point = CompositeSample;

    fn sample_point(&self, x: &Vec3, d: &Vec3) -> Result<CompositeSample> {
        composite_eval(self, x, d)
    }

    fn exact_optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> Option<f64> {
        self.components
            .iter()
            .map(|f| f.exact_optical_depth(ray, t0, t1))
            .sum()
    }
}

/// `p(t, i) = sigma_i(r(t)) T(t)` for every component.
pub fn joint_depth_component_pdf(
    scene: &CompositeScene,
    ray: &Ray,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let trans = transmittance(scene, ray, t, quad)?;
    let sample = composite_eval(scene, &ray.at(t), &ray.direction)?;
    Ok(sample.sigmas.iter().map(|s| s * trans).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentMarginal {
    /// `p(i)`: probability that the first event along the ray is component `i`.
    pub p: Vec<f64>,
    /// `T(t_far)`: probability of no event before the cutoff.
    pub residual: f64,
}

fn marginal_from_trace(trace: &Trace<CompositeSample>, n: usize) -> ComponentMarginal {
    let mut p = vec![0.0; n];
    for (w, point) in trace.quadrature.weights.iter().zip(&trace.points) {
        if point.empty {
            continue;
        }
        for (pi, s) in p.iter_mut().zip(&point.sigmas) {
            *pi += w * (s / point.sigma);
        }
    }
    ComponentMarginal {
        p,
        residual: trace.quadrature.t_far_transmittance,
    }
}

fn trace_ray(
    scene: &CompositeScene,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<Trace<CompositeSample>> {
    let mut rng = stream_rng(quad.seed, stream);
    trace_hierarchical(scene, ray, quad, &mut rng)
}

pub fn component_marginal(
    scene: &CompositeScene,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<ComponentMarginal> {
    Ok(marginal_from_trace(&trace_ray(scene, ray, quad, stream)?, scene.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Empty,
    Component(usize),
}

impl Segment {
    /// Mask id: 0 for empty, `i + 1` for component `i`.
    pub fn mask_id(self) -> u32 {
        match self {
            Segment::Empty => 0,
            Segment::Component(i) => i as u32 + 1,
        }
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax_lowest(p: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in p.iter().enumerate() {
        if best.map_or(true, |b| *v > p[b]) {
            best = Some(i);
        }
    }
    best
}

fn segment_from(marginal: &ComponentMarginal, empty: bool) -> Segment {
    if empty {
        return Segment::Empty;
    }
    argmax_lowest(&marginal.p).map_or(Segment::Empty, Segment::Component)
}

pub fn segment_ray(
    scene: &CompositeScene,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<Segment> {
    let trace = trace_ray(scene, ray, quad, stream)?;
    let marginal = marginal_from_trace(&trace, scene.len());
    Ok(segment_from(&marginal, trace.quadrature.empty))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeRender {
    pub color: Rgb,
    pub expected_depth: Option<f64>,
    pub raw_expected_depth: f64,
    pub alpha: f64,
    pub empty: bool,
    pub component_probs: Vec<f64>,
    pub segment: Segment,
}

pub fn composite_render(
    scene: &CompositeScene,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<CompositeRender> {
    let trace = trace_ray(scene, ray, quad, stream)?;
    let r = trace.render();
    let marginal = marginal_from_trace(&trace, scene.len());
    Ok(CompositeRender {
        color: r.color,
        expected_depth: r.expected_depth,
        raw_expected_depth: r.raw_expected_depth,
        alpha: r.alpha,
        empty: r.empty,
        segment: segment_from(&marginal, r.empty),
        component_probs: marginal.p,
    })
}

/// Renders every ray in parallel; ray `i` uses random stream `i`, so the
/// result does not depend on the thread count.
pub fn render_rays(
    scene: &CompositeScene,
    rays: &[Ray],
    quad: &QuadratureConfig,
) -> Result<Vec<CompositeRender>> {
    rays.par_iter()
        .enumerate()
        .map(|(i, ray)| {
            composite_render(scene, ray, quad, i as u64).map_err(|e| Error::Ray {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// A rendered camera view in row-major order from the top row.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub color: Vec<Rgb>,
    /// Renormalised expected depth; the ray's cutoff for empty rays.
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mask: Vec<u32>,
}

pub fn render_view(
    scene: &CompositeScene,
    camera: &Camera,
    quad: &QuadratureConfig,
) -> Result<RenderedView> {
    let rays = pinhole_rays(camera, scene.t_far)?;
    let renders = render_rays(scene, &rays, quad)?;
    Ok(RenderedView {
        width: camera.width,
        height: camera.height,
        color: renders.iter().map(|r| r.color).collect(),
        depth: renders
            .iter()
            .zip(&rays)
            .map(|(r, ray)| r.expected_depth.unwrap_or(ray.t_far))
            .collect(),
        alpha: renders.iter().map(|r| r.alpha).collect(),
        mask: renders.iter().map(|r| r.segment.mask_id()).collect(),
    })
}

/// Closed-form color of an infinite homogeneous mixture: `sum c_i sigma_i / sigma`.
pub fn mixture_render_constant(sigmas: &[f64], colors: &[Rgb]) -> Result<Rgb> {
    if sigmas.len() != colors.len() {
        return Err(Error::Dimension(format!(
            "{} densities but {} colors",
            sigmas.len(),
            colors.len()
        )));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidConfig("mixture densities must be finite and >= 0".into()));
    }
    let total: f64 = sigmas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMixture);
    }
    let mut out = [0.0; 3];
    for (s, c) in sigmas.iter().zip(colors) {
        for k in 0..3 {
            out[k] += c[k] * s / total;
        }
    }
    Ok(out)
}
