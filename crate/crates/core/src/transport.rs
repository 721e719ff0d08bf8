//! Single-medium transport along a ray.
//!
//! Light arriving at the camera is modelled as the first event of an
//! inhomogeneous Poisson process with rate `sigma(r(t))`. Transmittance
//! `T(t)` is the probability of no event before `t`, the depth density is
//! `p(t) = sigma(r(t)) T(t)`, and `1 - T(t)` is its CDF.
//!
//! Rendering discretises the ray into samples whose quadrature cells
//! partition `[0, t_far]` (cell boundaries halfway between neighbouring
//! samples), composites them front to back and renormalises the color by the
//! captured mass `1 - T(t_far)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, FieldSample, PiecewiseConstantRayField};
use crate::geometry::{Ray, Vec3};
use crate::rng::stream_rng;
use crate::Rgb;

/// Total weight below which a ray is reported as empty.
pub const EMPTY_RAY_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            n_coarse: 64,
            n_fine: 128,
            seed: 0,
            stratified: true,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coarse < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_coarse must be >= 2, got {}",
                self.n_coarse
            )));
        }
        Ok(())
    }
}

/// What a medium reports at a point: total density and the color emitted there.
pub trait MediumPoint {
    fn sigma(&self) -> f64;
    fn color(&self) -> Rgb;
}

impl MediumPoint for FieldSample {
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn color(&self) -> Rgb {
        self.color
    }
}

/// Anything that can be marched: a single field or a superposition.
pub trait Medium: Sync {
    type Point: MediumPoint + Send;

    fn sample_point(&self, x: &Vec3, d: &Vec3) -> Result<Self::Point>;

    /// Closed-form optical depth over `[t0, t1]`, if available.
    fn exact_optical_depth(&self, _ray: &Ray, _t0: f64, _t1: f64) -> Option<f64> {
        None
    }
}

impl Medium for Field {
    type Point = FieldSample;

    fn sample_point(&self, x: &Vec3, d: &Vec3) -> Result<FieldSample> {
        self.eval(x, d)
    }

    fn exact_optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> Option<f64> {
        Field::exact_optical_depth(self, ray, t0, t1)
    }
}

fn sigma_at<M: Medium + ?Sized>(medium: &M, ray: &Ray, t: f64) -> Result<f64> {
    Ok(medium.sample_point(&ray.at(t), &ray.direction)?.sigma())
}

/// Midpoint rule for `integral_0^t sigma` with `panels` equal panels on `[0, t]`.
pub fn midpoint_optical_depth<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    t: f64,
    panels: usize,
) -> Result<f64> {
    if t <= 0.0 || panels == 0 {
        return Ok(0.0);
    }
    let h = t / panels as f64;
    let mut tau = 0.0f64;
    for k in 0..panels {
        tau += sigma_at(medium, ray, (k as f64 + 0.5) * h)?;
    }
    Ok(tau * h)
}

/// `integral_0^t sigma` on a fixed grid of `panels` midpoint panels spanning
/// `[0, ray.t_far]`; the panel containing `t` contributes its midpoint
/// density times the covered length. The fixed grid keeps the estimate
/// monotone in `t`.
fn grid_optical_depth<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    t: f64,
    panels: usize,
) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let h = ray.t_far / panels as f64;
    let full = (t / h).floor() as usize;
    let mut tau = 0.0f64;
    for k in 0..full {
        tau += sigma_at(medium, ray, (k as f64 + 0.5) * h)? * h;
    }
    let rest = t - full as f64 * h;
    if rest > 0.0 {
        tau += sigma_at(medium, ray, (full as f64 + 0.5) * h)? * rest;
    }
    Ok(tau)
}

/// `T(t) = exp(-integral_0^t sigma)`.
///
/// Uses the medium's closed form when it has one, otherwise midpoint
/// quadrature with `quad.n_coarse` panels over `[0, ray.t_far]`.
pub fn transmittance<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if t <= 0.0 {
        return Ok(1.0);
    }
    let tau = match medium.exact_optical_depth(ray, 0.0, t) {
        Some(tau) => tau,
        None => grid_optical_depth(medium, ray, t, quad.n_coarse.max(1))?,
    };
    Ok((-tau).exp())
}

/// Depth density `p(t) = sigma(r(t)) T(t)`.
pub fn depth_pdf<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(sigma_at(medium, ray, t)? * transmittance(medium, ray, t, quad)?)
}

/// `P(depth <= t) = 1 - T(t)`.
pub fn depth_cdf<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(1.0 - transmittance(medium, ray, t, quad)?)
}

/// Transmittance and depth density tabulated at the midpoints of `panels`
/// equal panels over `[0, t_far]`, with the optical depth accumulated once.
#[derive(Clone, Debug)]
pub struct DepthProfile {
    pub panel_width: f64,
    pub t: Vec<f64>,
    pub transmittance: Vec<f64>,
    pub pdf: Vec<f64>,
    pub t_far_transmittance: f64,
}

impl DepthProfile {
    /// Midpoint-rule `integral_0^t_far p(t) dt`.
    pub fn pdf_mass(&self) -> f64 {
        self.pdf.iter().sum::<f64>() * self.panel_width
    }
}

pub fn depth_profile<M: Medium + ?Sized>(medium: &M, ray: &Ray, panels: usize) -> Result<DepthProfile> {
    let h = ray.t_far / panels as f64;
    let mut tau = 0.0f64;
    let mut out = DepthProfile {
        panel_width: h,
        t: Vec::with_capacity(panels),
        transmittance: Vec::with_capacity(panels),
        pdf: Vec::with_capacity(panels),
        t_far_transmittance: 1.0,
    };
    for k in 0..panels {
        let t = (k as f64 + 0.5) * h;
        let sigma = sigma_at(medium, ray, t)?;
        let trans = (-(tau + 0.5 * sigma * h)).exp();
        out.t.push(t);
        out.transmittance.push(trans);
        out.pdf.push(sigma * trans);
        tau += sigma * h;
    }
    out.t_far_transmittance = (-tau).exp();
    Ok(out)
}

/// One uniform sample in each of `k` equal bins of `[0, t_far)`.
pub fn stratified_samples<R: Rng + ?Sized>(k: usize, t_far: f64, rng: &mut R) -> Vec<f64> {
    let width = t_far / k as f64;
    (0..k)
        .map(|i| (i as f64 + rng.gen::<f64>()) * width)
        .collect()
}

fn bin_centers(k: usize, t_far: f64) -> Vec<f64> {
    let width = t_far / k as f64;
    (0..k).map(|i| (i as f64 + 0.5) * width).collect()
}

/// Cell widths for sorted positions: cells split halfway between neighbours
/// and the outer cells extend to `0` and `t_far`, so the widths sum to `t_far`.
pub fn partition_widths(t: &[f64], t_far: f64) -> Vec<f64> {
    let edges = partition_edges(t, t_far);
    edges.windows(2).map(|e| e[1] - e[0]).collect()
}

fn partition_edges(t: &[f64], t_far: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(t.len() + 1);
    edges.push(0.0);
    edges.extend(t.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(t_far);
    edges
}

/// Positions, densities, colors and cell widths along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub color: Vec<Rgb>,
    pub delta: Vec<f64>,
}

impl RaySamples {
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.sigma.len() != n || self.color.len() != n || self.delta.len() != n {
            return Err(Error::Dimension("ray sample arrays differ in length".into()));
        }
        if self.t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("sample positions must increase strictly".into()));
        }
        if self.delta.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidConfig("cell widths must be positive".into()));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("densities must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureResult {
    /// Renormalised color; black when the ray is empty.
    pub color: Rgb,
    pub weights: Vec<f64>,
    /// `T(t_far)`: mass the discretised ray leaves beyond the cutoff.
    pub t_far_transmittance: f64,
    pub empty: bool,
}

impl QuadratureResult {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Front-to-back alpha compositing of `samples`.
///
/// `w_i = T_i (1 - exp(-sigma_i delta_i))` with `T_i = exp(-sum_{j<i} sigma_j delta_j)`.
pub fn quadrature_render(samples: &RaySamples) -> QuadratureResult {
    composite(&samples.sigma, &samples.color, &samples.delta)
}

fn composite(sigma: &[f64], color: &[Rgb], delta: &[f64]) -> QuadratureResult {
    let mut tau = 0.0f64;
    let mut weights = Vec::with_capacity(sigma.len());
    let mut accum = [0.0; 3];
    for i in 0..sigma.len() {
        let step = sigma[i] * delta[i];
        let w = (-tau).exp() * (1.0 - (-step).exp());
        tau += step;
        for k in 0..3 {
            accum[k] += w * color[i][k];
        }
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    let empty = !(total > EMPTY_RAY_EPS);
    let color = if empty {
        [0.0; 3]
    } else {
        accum.map(|c| c / total)
    };
    QuadratureResult {
        color,
        weights,
        t_far_transmittance: (-tau).exp(),
        empty,
    }
}

/// Draws `n` positions from the piecewise-constant density whose cell
/// `[edges[i], edges[i+1]]` carries mass proportional to `weights[i]`.
pub fn inverse_cdf_samples<R: Rng + ?Sized>(
    edges: &[f64],
    weights: &[f64],
    n: usize,
    stratified: bool,
    rng: &mut R,
) -> Vec<f64> {
    debug_assert_eq!(edges.len(), weights.len() + 1);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || n == 0 {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(weights.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += w / total;
        cdf.push(acc);
    }
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    (0..n)
        .map(|j| {
            let jitter = if stratified { rng.gen::<f64>() } else { 0.5 };
            let u = (j as f64 + jitter) / n as f64;
            let i = (cdf.partition_point(|c| *c <= u).max(1) - 1).min(last_positive);
            let span = cdf[i + 1] - cdf[i];
            let frac = if span > 0.0 {
                ((u - cdf[i]) / span).clamp(0.0, 1.0)
            } else {
                0.5
            };
            edges[i] + frac * (edges[i + 1] - edges[i])
        })
        .collect()
}

/// Samples taken along a ray, the medium's response at each and the
/// composited result.
#[derive(Clone, Debug)]
pub struct Trace<P> {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub points: Vec<P>,
    pub quadrature: QuadratureResult,
}

impl<P: MediumPoint> Trace<P> {
    fn build(t: Vec<f64>, points: Vec<P>, t_far: f64) -> Self {
        let delta = partition_widths(&t, t_far);
        let sigma: Vec<f64> = points.iter().map(|p| p.sigma()).collect();
        let color: Vec<Rgb> = points.iter().map(|p| p.color()).collect();
        let quadrature = composite(&sigma, &color, &delta);
        Self {
            t,
            delta,
            points,
            quadrature,
        }
    }

    pub fn samples(&self) -> RaySamples {
        RaySamples {
            t: self.t.clone(),
            sigma: self.points.iter().map(|p| p.sigma()).collect(),
            color: self.points.iter().map(|p| p.color()).collect(),
            delta: self.delta.clone(),
        }
    }

    pub fn render(&self) -> RayRender {
        let q = &self.quadrature;
        let mass = q.weight_sum();
        let raw: f64 = q.weights.iter().zip(&self.t).map(|(w, t)| w * t).sum();
        RayRender {
            color: q.color,
            expected_depth: (!q.empty).then(|| raw / mass),
            raw_expected_depth: raw,
            alpha: 1.0 - q.t_far_transmittance,
            empty: q.empty,
        }
    }
}

fn evaluate<M: Medium + ?Sized>(medium: &M, ray: &Ray, t: &[f64]) -> Result<Vec<M::Point>> {
    t.iter()
        .map(|&ti| medium.sample_point(&ray.at(ti), &ray.direction))
        .collect()
}

/// Evaluates and composites the medium at sorted positions `t`.
pub fn trace_at<M: Medium + ?Sized>(medium: &M, ray: &Ray, t: Vec<f64>) -> Result<Trace<M::Point>> {
    let points = evaluate(medium, ray, &t)?;
    Ok(Trace::build(t, points, ray.t_far))
}

/// Coarse pass only: `quad.n_coarse` stratified (or bin-centred) samples.
pub fn trace_coarse<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    ray: &Ray,
    quad: &QuadratureConfig,
    rng: &mut R,
) -> Result<Trace<M::Point>> {
    quad.validate()?;
    let t = if quad.stratified {
        stratified_samples(quad.n_coarse, ray.t_far, rng)
    } else {
        bin_centers(quad.n_coarse, ray.t_far)
    };
    trace_at(medium, ray, t)
}

/// Adds `n_fine` inverse-CDF samples drawn from `coarse`'s weights, then
/// merges and re-composites. Empty traces are returned unchanged.
pub fn refine<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    ray: &Ray,
    coarse: Trace<M::Point>,
    n_fine: usize,
    stratified: bool,
    rng: &mut R,
) -> Result<Trace<M::Point>> {
    if n_fine == 0 || coarse.quadrature.empty {
        return Ok(coarse);
    }
    let edges = partition_edges(&coarse.t, ray.t_far);
    let fine_t = inverse_cdf_samples(&edges, &coarse.quadrature.weights, n_fine, stratified, rng);
    let fine_points = evaluate(medium, ray, &fine_t)?;

    let mut merged: Vec<(f64, M::Point)> = coarse
        .t
        .into_iter()
        .zip(coarse.points)
        .chain(fine_t.into_iter().zip(fine_points))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    merged.dedup_by(|a, b| a.0 == b.0);
    let (t, points): (Vec<f64>, Vec<M::Point>) = merged.into_iter().unzip();
    Ok(Trace::build(t, points, ray.t_far))
}

/// Coarse pass, then `quad.n_fine` inverse-CDF samples from the coarse
/// weights, merged and re-composited.
pub fn trace_hierarchical<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    ray: &Ray,
    quad: &QuadratureConfig,
    rng: &mut R,
) -> Result<Trace<M::Point>> {
    let coarse = trace_coarse(medium, ray, quad, rng)?;
    refine(medium, ray, coarse, quad.n_fine, quad.stratified, rng)
}

/// Deterministic dense reference: `k` bin-centred samples.
pub fn trace_dense<M: Medium + ?Sized>(medium: &M, ray: &Ray, k: usize) -> Result<Trace<M::Point>> {
    trace_at(medium, ray, bin_centers(k, ray.t_far))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayRender {
    pub color: Rgb,
    /// `sum w_i t_i / sum w_i`; `None` for an empty ray.
    pub expected_depth: Option<f64>,
    /// `sum w_i t_i` without renormalisation by the captured mass.
    pub raw_expected_depth: f64,
    /// `1 - T(t_far)`.
    pub alpha: f64,
    pub empty: bool,
}

/// Hierarchical render of one ray. `stream` selects the ray's random stream
/// under `quad.seed`, so pixel `i` always sees the same samples.
pub fn hierarchical_render<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<RayRender> {
    let mut rng = stream_rng(quad.seed, stream);
    Ok(trace_hierarchical(medium, ray, quad, &mut rng)?.render())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    /// Mean of the depth distribution restricted to `[0, t_far]`; `None` if
    /// the ray is empty.
    pub renormalized: Option<f64>,
    /// `integral_0^t_far t p(t) dt`.
    pub raw: f64,
}

pub fn expected_depth<M: Medium + ?Sized>(
    medium: &M,
    ray: &Ray,
    quad: &QuadratureConfig,
    stream: u64,
) -> Result<DepthEstimate> {
    let r = hierarchical_render(medium, ray, quad, stream)?;
    Ok(DepthEstimate {
        renormalized: r.expected_depth,
        raw: r.raw_expected_depth,
    })
}

/// Closed-form quantities for a piecewise-constant field along its own ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiecewiseExact {
    pub transmittance: f64,
    pub pdf: f64,
    /// `integral_0^t p(s) c(s) ds`.
    pub color: Rgb,
}

pub fn analytic_piecewise(field: &PiecewiseConstantRayField, t: f64) -> PiecewiseExact {
    let transmittance = (-field.optical_depth(0.0, t)).exp();
    PiecewiseExact {
        transmittance,
        pdf: field.at_depth(t).sigma * transmittance,
        color: piecewise_color(field, t),
    }
}

/// `P(a <= depth <= b)` for a piecewise-constant field.
pub fn piecewise_mass(field: &PiecewiseConstantRayField, a: f64, b: f64) -> f64 {
    (-field.optical_depth(0.0, a)).exp() - (-field.optical_depth(0.0, b)).exp()
}

fn piecewise_color(field: &PiecewiseConstantRayField, t_end: f64) -> Rgb {
    let bps = field.breakpoints();
    let mut out = [0.0; 3];
    let mut tau = 0.0f64;
    for j in 0..bps.len() {
        let lo = bps[j];
        if lo >= t_end {
            break;
        }
        let hi = bps.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t_end);
        let sigma = field.sigmas()[j];
        if sigma > 0.0 {
            let mass = (-tau).exp() * (1.0 - (-sigma * (hi - lo)).exp());
            for k in 0..3 {
                out[k] += mass * field.colors()[j][k];
            }
            tau += sigma * (hi - lo);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantField, GaussianBlobField};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn a2_field() -> PiecewiseConstantRayField {
        PiecewiseConstantRayField::new(
            Vec3::zeros(),
            Vec3::z(),
            vec![0.0, 50.0, 51.0, 80.0],
            vec![0.0, 100.0, 0.0, 10.0],
            vec![[0.0; 3], [1.0; 3], [0.0; 3], [0.0; 3]],
        )
        .unwrap()
    }

    fn z_ray(t_far: f64) -> Ray {
        Ray::new(Vec3::zeros(), Vec3::z(), t_far).unwrap()
    }

    fn constant(sigma: f64) -> Field {
        Field::Constant(ConstantField::new(sigma, [0.3, 0.6, 0.9]))
    }

    /// Opaque wall starting at `at` along the z-ray.
    fn wall(at: f64) -> Field {
        Field::PiecewiseRay(
            PiecewiseConstantRayField::new(
                Vec3::zeros(),
                Vec3::z(),
                vec![0.0, at],
                vec![0.0, 1000.0],
                vec![[0.0; 3], [0.2, 0.4, 0.6]],
            )
            .unwrap(),
        )
    }

    #[test]
    fn transmittance_examples() {
        let q = QuadratureConfig::default();
        let blob = Field::GaussianBlob(GaussianBlobField::new(Vec3::new(0.0, 0.0, 2.0), Vec3::repeat(0.5), 5.0, [1.0; 3]));
        assert_eq!(transmittance(&blob, &z_ray(10.0), 0.0, &q).unwrap(), 1.0);
        assert_abs_diff_eq!(
            transmittance(&constant(0.5), &z_ray(10.0), 2.0, &q).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        let a2 = Field::PiecewiseRay(a2_field());
        let ray = z_ray(100.0);
        assert_eq!(transmittance(&a2, &ray, 51.0, &q).unwrap(), (-100.0f64).exp());
        assert_eq!(transmittance(&a2, &ray, 80.0, &q).unwrap(), (-100.0f64).exp());
    }

    #[test]
    fn grid_quadrature_matches_constant_closed_form() {
        // Off the exact path: the blob route uses the panel grid.
        let q = QuadratureConfig { n_coarse: 7, ..Default::default() };
        let f = constant(0.5);
        let ray = z_ray(10.0);
        for t in [0.3, 2.0, 6.66, 10.0] {
            let tau = grid_optical_depth(&f, &ray, t, q.n_coarse).unwrap();
            assert_abs_diff_eq!(tau, 0.5 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn pdf_and_cdf_examples() {
        let q = QuadratureConfig::default();
        let ray = z_ray(50.0);
        let f = constant(0.7);
        for t in [0.0, 0.5, 3.0] {
            assert_abs_diff_eq!(depth_pdf(&f, &ray, t, &q).unwrap(), 0.7 * (-0.7 * t).exp(), epsilon = 1e-14);
        }
        assert_eq!(depth_cdf(&f, &ray, 0.0, &q).unwrap(), 0.0);
        let unit = constant(1.0);
        assert_abs_diff_eq!(depth_cdf(&unit, &ray, 50.0, &q).unwrap(), 1.0, epsilon = 1e-15);

        let a2 = Field::PiecewiseRay(a2_field());
        let ray = z_ray(100.0);
        assert_eq!(depth_cdf(&a2, &ray, 51.0, &q).unwrap(), 1.0 - (-100.0f64).exp());
        assert_abs_diff_eq!(piecewise_mass(&a2_field(), 50.0, 51.0), 1.0 - (-100.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn stratified_samples_stay_in_their_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = stratified_samples(1, 7.0, &mut rng);
        assert!(s[0] >= 0.0 && s[0] < 7.0);
        let s = stratified_samples(50, 100.0, &mut rng);
        for (i, t) in s.iter().enumerate() {
            assert!(*t >= 2.0 * i as f64 && *t < 2.0 * (i + 1) as f64);
        }
        // Bin 26 (1-based) is [50, 52): half of it lies on the slab.
        let mut hits = 0;
        let n = 20_000;
        for _ in 0..n {
            let s = stratified_samples(50, 100.0, &mut rng);
            hits += (s[25] <= 51.0) as usize;
        }
        let p = hits as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() <= 3.0 * se, "p = {p}");
    }

    #[test]
    fn stratified_occupancy_passes_chi_square() {
        // Within-bin positions, split into 10 sub-bins, should be uniform.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws / 20 {
            for (i, t) in stratified_samples(20, 40.0, &mut rng).iter().enumerate() {
                let frac = t / 2.0 - i as f64;
                counts[(frac * 10.0) as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn quadrature_vacuum_and_opaque() {
        let vac = RaySamples {
            t: vec![1.0, 2.0],
            sigma: vec![0.0, 0.0],
            color: vec![[1.0; 3]; 2],
            delta: vec![1.0, 1.0],
        };
        let r = quadrature_render(&vac);
        assert!(r.empty);
        assert_eq!(r.t_far_transmittance, 1.0);
        assert_eq!(r.color, [0.0; 3]);

        let opaque = RaySamples {
            t: vec![1.0],
            sigma: vec![1e3],
            color: vec![[1.0, 0.0, 0.0]],
            delta: vec![1.0],
        };
        let r = quadrature_render(&opaque);
        assert!(!r.empty);
        assert_eq!(r.color, [1.0, 0.0, 0.0]);
        assert!(r.t_far_transmittance < 1e-300);
    }

    #[test]
    fn dense_quadrature_on_thin_slab() {
        let a2 = Field::PiecewiseRay(a2_field());
        let trace = trace_dense(&a2, &z_ray(100.0), 10_000).unwrap();
        let r = trace.render();
        let exact = 1.0 - (-100.0f64).exp();
        assert!((r.color[0] - exact).abs() <= 1e-3);
    }

    #[test]
    fn vacuum_hierarchical_render_is_empty() {
        let r = hierarchical_render(&constant(0.0), &z_ray(10.0), &QuadratureConfig::default(), 0).unwrap();
        assert!(r.empty);
        assert_eq!(r.alpha, 0.0);
        assert_eq!(r.expected_depth, None);
        let d = expected_depth(&constant(0.0), &z_ray(10.0), &QuadratureConfig::default(), 0).unwrap();
        assert_eq!(d.renormalized, None);
    }

    #[test]
    fn opaque_wall_depth() {
        let q = QuadratureConfig::default();
        for stream in 0..20 {
            let r = hierarchical_render(&wall(5.0), &z_ray(10.0), &q, stream).unwrap();
            let depth = r.expected_depth.unwrap();
            assert!((depth - 5.0).abs() <= 0.05, "depth {depth}");
            assert!(r.alpha > 1.0 - 1e-9);
            for (got, want) in r.color.iter().zip([0.2, 0.4, 0.6]) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_medium_mean_depth() {
        let q = QuadratureConfig::default();
        let sigma = 0.5;
        let d = expected_depth(&constant(sigma), &z_ray(60.0), &q, 4).unwrap();
        assert!((d.renormalized.unwrap() - 1.0 / sigma).abs() < 0.05, "{d:?}");
    }

    #[test]
    fn hierarchical_render_is_deterministic() {
        let blob = Field::GaussianBlob(GaussianBlobField::new(Vec3::new(0.1, 0.0, 3.0), Vec3::repeat(0.6), 6.0, [0.4, 0.5, 0.6]));
        let q = QuadratureConfig { seed: 99, ..Default::default() };
        let a = hierarchical_render(&blob, &z_ray(8.0), &q, 17).unwrap();
        let b = hierarchical_render(&blob, &z_ray(8.0), &q, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_piecewise_examples() {
        let exact = analytic_piecewise(&a2_field(), f64::INFINITY);
        assert_abs_diff_eq!(exact.color[0], 1.0 - (-100.0f64).exp(), epsilon = 1e-15);

        let single = PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0, 1.0], vec![2.0, 0.0], vec![[1.0; 3], [0.0; 3]]).unwrap();
        assert_abs_diff_eq!(analytic_piecewise(&single, 1.0).transmittance, (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn analytic_piecewise_agrees_with_dense_quadrature() {
        let f = PiecewiseConstantRayField::new(
            Vec3::zeros(),
            Vec3::z(),
            vec![0.0, 1.0],
            vec![0.3, 1.7],
            vec![[0.9, 0.1, 0.0], [0.0, 0.2, 1.0]],
        )
        .unwrap();
        let field = Field::PiecewiseRay(f.clone());
        let ray = z_ray(2.0);
        // 1000 panels on [0, 2] put the breakpoint on a panel edge.
        let tau = midpoint_optical_depth(&field, &ray, 2.0, 1000).unwrap();
        let exact = analytic_piecewise(&f, 2.0);
        assert!(((-tau).exp() - exact.transmittance).abs() <= 1e-9 * exact.transmittance);

        let trace = trace_dense(&field, &ray, 20_000).unwrap();
        let q = &trace.quadrature;
        for k in 0..3 {
            let quad: f64 = q.weights.iter().zip(&trace.points).map(|(w, p)| w * p.color[k]).sum();
            assert!((quad - exact.color[k]).abs() <= 1e-9 * exact.color[k].max(1e-300) + 1e-12);
        }
    }

    #[test]
    fn partition_widths_cover_the_ray() {
        let w = partition_widths(&[1.0, 2.0, 4.0], 10.0);
        assert_eq!(w, vec![1.5, 1.5, 7.0]);
    }

    #[test]
    fn inverse_cdf_avoids_zero_weight_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges = [0.0, 1.0, 2.0, 3.0, 4.0];
        let weights = [0.0, 0.5, 0.0, 0.5];
        for t in inverse_cdf_samples(&edges, &weights, 200, true, &mut rng) {
            assert!((1.0..=2.0).contains(&t) || (3.0..=4.0).contains(&t), "{t}");
        }
    }
}
