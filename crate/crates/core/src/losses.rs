//! RGB-D training objective.
//!
//! Given an observed surface depth `t` along a ray, the depth likelihood is
//! `p(t) = sigma(r(t)) exp(-integral_0^t sigma)`. The log-density term is
//! evaluated at a jittered point `t + eps`, `eps ~ U(0, delta)`, and the
//! free-space integral is estimated by Monte Carlo: uniformly on `[0, t]`,
//! or from a proposal that puts half its mass on the last 2% of the ray.
//! The observed color is scored under an isotropic Gaussian around the
//! scene's expected color at the jittered point.
//!
//! Every random quantity of a ray is drawn up front into [`RayDraws`], so the
//! same draws can be replayed for losses, gradients and finite differences.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{composite_eval, CompositeScene};
use crate::error::{Error, Result};
use crate::fields::floored_log_density;
use crate::geometry::Ray;
use crate::transport::Medium;
use crate::transport::MediumPoint;
use crate::Rgb;

/// Fraction of the ray before the proposal's dense tail.
pub const PROPOSAL_SPLIT: f64 = 0.98;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbdSample {
    pub ray: Ray,
    pub color: Rgb,
    pub depth: f64,
}

impl RgbdSample {
    pub fn new(ray: Ray, color: Rgb, depth: f64) -> Result<Self> {
        if !(depth > 0.0 && depth < ray.t_far) {
            return Err(Error::InvalidConfig(format!(
                "observed depth {depth} outside (0, {})",
                ray.t_far
            )));
        }
        if color.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("observed color"));
        }
        Ok(Self { ray, color, depth })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub sigma_c: f64,
    pub delta: f64,
    pub k_o_max: f64,
    pub ramp_start: u64,
    pub ramp_end: u64,
    pub n_free_samples: usize,
    pub min_proposal_depth: f64,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma_c: 0.2,
            delta: 0.07,
            k_o_max: 0.05,
            ramp_start: 50_000,
            ramp_end: 100_000,
            n_free_samples: 1,
            min_proposal_depth: 1e-4,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_c > 0.0) {
            return Err(Error::InvalidConfig("sigma_c must be > 0".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidConfig("delta must be >= 0".into()));
        }
        if self.ramp_start > self.ramp_end {
            return Err(Error::InvalidConfig("ramp_start must not exceed ramp_end".into()));
        }
        if self.n_free_samples == 0 {
            return Err(Error::InvalidConfig("n_free_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Overlap weight at `iteration`: zero before the ramp, linear across it,
/// `k_o_max` after.
pub fn k_o_schedule(iteration: u64, cfg: &LossConfig) -> f64 {
    if iteration < cfg.ramp_start {
        0.0
    } else if iteration >= cfg.ramp_end {
        cfg.k_o_max
    } else {
        cfg.k_o_max * (iteration - cfg.ramp_start) as f64 / (cfg.ramp_end - cfg.ramp_start) as f64
    }
}

/// Density of the importance proposal on `[0, t]`.
pub fn proposal_density(t_prime: f64, t: f64) -> f64 {
    if !(0.0..=t).contains(&t_prime) {
        0.0
    } else if t_prime < PROPOSAL_SPLIT * t {
        0.5 / (PROPOSAL_SPLIT * t)
    } else {
        0.5 / ((1.0 - PROPOSAL_SPLIT) * t)
    }
}

fn draw_proposal<R: Rng + ?Sized>(t: f64, rng: &mut R) -> f64 {
    let tail = rng.gen::<f64>() < 0.5;
    let u = rng.gen::<f64>();
    if tail {
        PROPOSAL_SPLIT * t + u * (1.0 - PROPOSAL_SPLIT) * t
    } else {
        u * PROPOSAL_SPLIT * t
    }
}

/// Free-space sampling scheme for the integral `integral_0^t sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeSpaceProposal {
    Uniform,
    Importance,
}

/// Random quantities for one ray: surface jitter and free-space samples with
/// their proposal densities.
#[derive(Clone, Debug, PartialEq)]
pub struct RayDraws {
    pub eps: f64,
    pub free_t: Vec<f64>,
    pub free_q: Vec<f64>,
}

impl RayDraws {
    pub fn surface_t(&self, sample: &RgbdSample) -> f64 {
        sample.depth + self.eps
    }
}

pub fn draw_ray<R: Rng + ?Sized>(
    sample: &RgbdSample,
    proposal: FreeSpaceProposal,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<RayDraws> {
    let t = sample.depth;
    let eps = if cfg.delta > 0.0 {
        rng.gen::<f64>() * cfg.delta
    } else {
        0.0
    };
    let n = cfg.n_free_samples;
    let mut free_t = Vec::with_capacity(n);
    let mut free_q = Vec::with_capacity(n);
    match proposal {
        FreeSpaceProposal::Uniform => {
            if !(t > 0.0) {
                return Err(Error::DegenerateProposal {
                    depth: t,
                    min: 0.0,
                });
            }
            for _ in 0..n {
                free_t.push(rng.gen::<f64>() * t);
                free_q.push(1.0 / t);
            }
        }
        FreeSpaceProposal::Importance => {
            if !(t > cfg.min_proposal_depth) {
                return Err(Error::DegenerateProposal {
                    depth: t,
                    min: cfg.min_proposal_depth,
                });
            }
            for _ in 0..n {
                let tp = draw_proposal(t, rng);
                free_t.push(tp);
                free_q.push(proposal_density(tp, t));
            }
        }
    }
    Ok(RayDraws { eps, free_t, free_q })
}

/// `-log sigma(r(t + eps)) + mean_k sigma(r(t_k)) / q(t_k)` for fixed draws.
pub fn depth_nll_with<M: Medium + ?Sized>(medium: &M, sample: &RgbdSample, draws: &RayDraws) -> Result<f64> {
    let ray = &sample.ray;
    let surface = medium.sample_point(&ray.at(draws.surface_t(sample)), &ray.direction)?;
    let mut integral = 0.0;
    for (t, q) in draws.free_t.iter().zip(&draws.free_q) {
        integral += medium.sample_point(&ray.at(*t), &ray.direction)?.sigma() / q;
    }
    integral /= draws.free_t.len() as f64;
    Ok(-floored_log_density(surface.sigma()) + integral)
}

/// Single-draw depth NLL with uniform free-space samples on `[0, t]`.
pub fn depth_nll_uniform<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    sample: &RgbdSample,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    let draws = draw_ray(sample, FreeSpaceProposal::Uniform, cfg, rng)?;
    depth_nll_with(medium, sample, &draws)
}

/// Single-draw depth NLL with free-space samples from the tail-heavy proposal.
pub fn depth_nll_importance<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    sample: &RgbdSample,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    let draws = draw_ray(sample, FreeSpaceProposal::Importance, cfg, rng)?;
    depth_nll_with(medium, sample, &draws)
}

/// `-sum_ch log N(observed_ch | predicted_ch, sigma_c^2)`.
pub fn gaussian_color_nll(observed: &Rgb, predicted: &Rgb, sigma_c: f64) -> f64 {
    let log_norm = (sigma_c * (2.0 * PI).sqrt()).ln();
    (0..3)
        .map(|k| {
            let z = (observed[k] - predicted[k]) / sigma_c;
            0.5 * z * z + log_norm
        })
        .sum()
}

/// Color NLL of the medium's color at the jittered surface point.
pub fn color_nll<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &M,
    sample: &RgbdSample,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    let eps = if cfg.delta > 0.0 {
        rng.gen::<f64>() * cfg.delta
    } else {
        0.0
    };
    let ray = &sample.ray;
    let p = medium.sample_point(&ray.at(sample.depth + eps), &ray.direction)?;
    Ok(gaussian_color_nll(&sample.color, &p.color(), cfg.sigma_c))
}

/// `sum_i sigma_i - max_i sigma_i`.
pub fn overlap_from_sigmas(sigmas: &[f64]) -> f64 {
    let max = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = sigmas.iter().skip(1).fold(sigmas[0], |a, s| a + s);
    (sum - max).max(0.0)
}

pub fn overlap_loss(scene: &CompositeScene, x: &crate::Vec3) -> Result<f64> {
    let s = composite_eval(scene, x, &crate::Vec3::z())?;
    Ok(overlap_from_sigmas(&s.sigmas))
}

/// Per-ray loss terms before weighting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayLoss {
    pub depth: f64,
    pub color: f64,
    pub overlap: f64,
}

pub fn ray_loss(
    scene: &CompositeScene,
    sample: &RgbdSample,
    draws: &RayDraws,
    cfg: &LossConfig,
) -> Result<RayLoss> {
    let ray = &sample.ray;
    let surface = composite_eval(scene, &ray.at(draws.surface_t(sample)), &ray.direction)?;
    let mut integral = 0.0;
    for (t, q) in draws.free_t.iter().zip(&draws.free_q) {
        integral += composite_eval(scene, &ray.at(*t), &ray.direction)?.sigma / q;
    }
    integral /= draws.free_t.len() as f64;
    Ok(RayLoss {
        depth: -floored_log_density(surface.sigma) + integral,
        color: gaussian_color_nll(&sample.color, &surface.color, cfg.sigma_c),
        overlap: overlap_from_sigmas(&surface.sigmas),
    })
}

/// Batch means of the loss terms. `total` is computed as
/// `depth + color + weighted_overlap` in that order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub depth: f64,
    pub color: f64,
    /// Unweighted mean overlap.
    pub overlap: f64,
    pub k_o: f64,
    /// `k_o * overlap`.
    pub weighted_overlap: f64,
}

/// Draws for a whole batch, sequentially from `rng`.
pub fn draw_batch<R: Rng + ?Sized>(batch: &[RgbdSample], cfg: &LossConfig, rng: &mut R) -> Result<Vec<RayDraws>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            draw_ray(s, FreeSpaceProposal::Importance, cfg, rng).map_err(|e| Error::Ray {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn evaluate_batch(
    scene: &CompositeScene,
    batch: &[RgbdSample],
    draws: &[RayDraws],
    iteration: u64,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let per_ray: Vec<RayLoss> = batch
        .par_iter()
        .zip(draws.par_iter())
        .enumerate()
        .map(|(i, (s, d))| {
            ray_loss(scene, s, d, cfg).map_err(|e| Error::Ray {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let n = per_ray.len() as f64;
    let depth = per_ray.iter().map(|r| r.depth).sum::<f64>() / n;
    let color = per_ray.iter().map(|r| r.color).sum::<f64>() / n;
    let overlap = per_ray.iter().map(|r| r.overlap).sum::<f64>() / n;
    let k_o = k_o_schedule(iteration, cfg);
    let weighted_overlap = k_o * overlap;
    Ok(LossBreakdown {
        total: depth + color + weighted_overlap,
        depth,
        color,
        overlap,
        k_o,
        weighted_overlap,
    })
}

/// Importance-sampled depth NLL plus color NLL plus scheduled overlap,
/// averaged over the batch.
pub fn total_loss<R: Rng + ?Sized>(
    scene: &CompositeScene,
    batch: &[RgbdSample],
    iteration: u64,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let draws = draw_batch(batch, cfg, rng)?;
    evaluate_batch(scene, batch, &draws, iteration, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantField, Field, GaussianBlobField, PiecewiseConstantRayField};
    use crate::geometry::Vec3;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn z_ray() -> Ray {
        Ray::new(Vec3::zeros(), Vec3::z(), 40.0).unwrap()
    }

    fn constant(sigma: f64) -> Field {
        Field::Constant(ConstantField::new(sigma, [0.5; 3]))
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn ramp_schedule() {
        let cfg = LossConfig::default();
        assert_eq!(k_o_schedule(0, &cfg), 0.0);
        assert_eq!(k_o_schedule(49_999, &cfg), 0.0);
        assert_abs_diff_eq!(k_o_schedule(75_000, &cfg), 0.025, epsilon = 1e-15);
        assert_eq!(k_o_schedule(1_000_000, &cfg), 0.05);
    }

    #[test]
    fn proposal_density_values() {
        let t = 3.0;
        assert_abs_diff_eq!(proposal_density(0.99 * t, t), 25.0 / t, epsilon = 1e-12);
        assert_abs_diff_eq!(proposal_density(0.5 * t, t), 0.5 / (0.98 * t), epsilon = 1e-15);
        // Integrates to one.
        let n = 100_000;
        let mass: f64 = (0..n).map(|k| proposal_density((k as f64 + 0.5) * t / n as f64, t) * t / n as f64).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_proposal_is_rejected() {
        let s = RgbdSample { ray: z_ray(), color: [0.0; 3], depth: 5e-5 };
        let mut rng = stream_rng(0, 0);
        assert!(matches!(
            depth_nll_importance(&constant(1.0), &s, &LossConfig::default(), &mut rng),
            Err(Error::DegenerateProposal { .. })
        ));
    }

    #[test]
    fn both_estimators_unbiased_on_constant_medium() {
        let c: f64 = 0.8;
        let t = 3.0;
        let exact = -c.ln() + c * t;
        let s = RgbdSample::new(z_ray(), [0.5; 3], t).unwrap();
        let cfg = LossConfig { delta: 0.0, ..Default::default() };
        // Uniform draws see the same density everywhere, so each estimate is exact.
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let u = depth_nll_uniform(&constant(c), &s, &cfg, &mut rng).unwrap();
            assert_abs_diff_eq!(u, exact, epsilon = 1e-12);
        }
        // Importance weights vary between the two proposal pieces.
        let draws: Vec<f64> = (0..100_000)
            .map(|_| depth_nll_importance(&constant(c), &s, &cfg, &mut rng).unwrap())
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn vacuum_before_wall_has_no_free_space_cost() {
        let f = Field::PiecewiseRay(
            PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0, 4.0], vec![0.0, 5.0], vec![[0.0; 3], [1.0; 3]]).unwrap(),
        );
        let s = RgbdSample::new(z_ray(), [1.0; 3], 4.0).unwrap();
        let cfg = LossConfig { delta: 0.05, ..Default::default() };
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let v = depth_nll_uniform(&f, &s, &cfg, &mut rng).unwrap();
            assert_abs_diff_eq!(v, -(5.0f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn estimators_on_slab_match_closed_form() {
        // Density 0.3 on [0, 2), 1.5 on [2, 3), 0.7 beyond; surface at t = 3.5.
        let pw = PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0, 2.0, 3.0], vec![0.3, 1.5, 0.7], vec![[0.0; 3]; 3]).unwrap();
        let exact = -(0.7f64).ln() + 0.3 * 2.0 + 1.5 + 0.7 * 0.5;
        let f = Field::PiecewiseRay(pw);
        let s = RgbdSample::new(z_ray(), [0.0; 3], 3.5).unwrap();
        let cfg = LossConfig { delta: 0.0, ..Default::default() };
        let mut rng = stream_rng(3, 0);
        let n = 20_000;
        let u: Vec<f64> = (0..n).map(|_| depth_nll_uniform(&f, &s, &cfg, &mut rng).unwrap()).collect();
        let i: Vec<f64> = (0..n).map(|_| depth_nll_importance(&f, &s, &cfg, &mut rng).unwrap()).collect();
        let (mu, seu) = mean_and_se(&u);
        let (mi, sei) = mean_and_se(&i);
        assert!((mu - exact).abs() <= 3.0 * seu, "{mu} vs {exact} (se {seu})");
        assert!((mi - exact).abs() <= 3.0 * sei, "{mi} vs {exact} (se {sei})");
    }

    #[test]
    fn no_jitter_log_term_is_exact() {
        let blob = Field::GaussianBlob(GaussianBlobField::new(Vec3::new(0.0, 0.0, 2.0), Vec3::repeat(0.5), 4.0, [1.0; 3]));
        let s = RgbdSample::new(z_ray(), [1.0; 3], 2.0).unwrap();
        let cfg = LossConfig { delta: 0.0, ..Default::default() };
        let draws = RayDraws { eps: 0.0, free_t: vec![], free_q: vec![] };
        let mut rng = stream_rng(0, 0);
        let d = draw_ray(&s, FreeSpaceProposal::Importance, &cfg, &mut rng).unwrap();
        assert_eq!(d.eps, 0.0);
        assert_eq!(draws.surface_t(&s), 2.0);
        let log_term = -floored_log_density(blob.eval(&s.ray.at(2.0), &Vec3::z()).unwrap().sigma);
        assert_abs_diff_eq!(log_term, -(4.0f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn color_nll_values() {
        let c = [0.2, 0.4, 0.6];
        assert_abs_diff_eq!(gaussian_color_nll(&c, &c, 0.2), 3.0 * (0.2 * (2.0 * PI).sqrt()).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(gaussian_color_nll(&c, &c, 0.2), -2.0715, epsilon = 1e-4);
        assert_abs_diff_eq!(gaussian_color_nll(&c, &c, 1.0), 2.7568, epsilon = 1e-4);
        let off = [0.4, 0.4, 0.6];
        assert_abs_diff_eq!(gaussian_color_nll(&off, &c, 0.2) - gaussian_color_nll(&c, &c, 0.2), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn overlap_values() {
        assert_eq!(overlap_from_sigmas(&[0.7, 0.0, 0.0]), 0.0);
        assert_eq!(overlap_from_sigmas(&[1.0, 1.0]), 1.0);
        assert_abs_diff_eq!(overlap_from_sigmas(&[0.3, 0.5, 0.2]), 0.5, epsilon = 1e-15);
    }

    fn batch() -> Vec<RgbdSample> {
        (0..16)
            .map(|i| {
                let ray = Ray::new(Vec3::new(0.02 * i as f64, 0.0, 0.0), Vec3::z(), 10.0).unwrap();
                RgbdSample::new(ray, [0.9, 0.1, 0.1], 1.7 + 0.01 * i as f64).unwrap()
            })
            .collect()
    }

    fn two_blobs() -> CompositeScene {
        CompositeScene::new(
            vec![
                Field::GaussianBlob(GaussianBlobField::new(Vec3::new(0.0, 0.0, 2.0), Vec3::repeat(0.5), 6.0, [1.0, 0.0, 0.0])),
                Field::GaussianBlob(GaussianBlobField::new(Vec3::new(0.2, 0.0, 2.4), Vec3::repeat(0.5), 6.0, [0.0, 0.0, 1.0])),
            ],
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn total_is_sum_of_breakdown_and_deterministic() {
        let cfg = LossConfig::default();
        let scene = two_blobs();
        let a = total_loss(&scene, &batch(), 80_000, &cfg, &mut stream_rng(7, 0)).unwrap();
        let b = total_loss(&scene, &batch(), 80_000, &cfg, &mut stream_rng(7, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total, a.depth + a.color + a.weighted_overlap);
        assert!(a.overlap > 0.0);

        let off = total_loss(&scene, &batch(), 0, &cfg, &mut stream_rng(7, 0)).unwrap();
        assert_eq!(off.k_o, 0.0);
        assert_eq!(off.total, off.depth + off.color);
    }

    #[test]
    fn single_component_has_no_overlap() {
        let scene = CompositeScene::new(vec![two_blobs().components[0].clone()], 10.0).unwrap();
        let l = total_loss(&scene, &batch(), 1_000_000, &LossConfig::default(), &mut stream_rng(1, 0)).unwrap();
        assert_eq!(l.overlap, 0.0);
        assert_eq!(l.weighted_overlap, 0.0);
    }

    proptest! {
        #[test]
        fn overlap_nonnegative(s in prop::collection::vec(0.0f64..10.0, 1..5)) {
            let o = overlap_from_sigmas(&s);
            prop_assert!(o >= 0.0);
            let support = s.iter().filter(|v| **v > 0.0).count();
            if support <= 1 {
                prop_assert_eq!(o, 0.0);
            }
        }
    }
}
