//! Gradient-based recovery of scene parameters from RGB-D observations.
//!
//! Gradients are taken with the Monte Carlo draws held fixed: for one ray
//! with surface point `x_s`, free-space samples `x_k` with proposal
//! densities `q_k`, and composite density `sigma = sum_i sigma_i`,
//!
//! ```text
//! dL/dtheta_i = -grad sigma_i(x_s) / sigma
//!               + (1/n) sum_k grad sigma_i(x_k) / q_k
//!               - sum_ch (C_ch - c_ch) / sigma_C^2 * dc_ch/dtheta_i
//!               + k_O (1 - [i = argmax]) grad sigma_i(x_s)
//! dc/dtheta_i = (sigma_i / sigma) grad c_i + (c_i - c) / sigma * grad sigma_i
//! ```
//!
//! The finite-difference oracle replays identical draws on both sides.

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{composite_eval, CompositeScene};
use crate::error::{Error, Result};
use crate::fields::{Field, FieldGradient, DENSITY_LOG_FLOOR};
use crate::geometry::Vec3;
use crate::losses::{
    draw_batch, evaluate_batch, overlap_from_sigmas, ray_loss, LossBreakdown,
    LossConfig, RayDraws, RgbdSample,
};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// First-order steps with per-parameter first and second moment estimates.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    /// Multiply the learning rate by `decay_factor` every this many iterations.
    pub decay_every: u64,
    pub decay_factor: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    /// Steps whose gradient norm exceeds this are skipped.
    pub skip_norm: f64,
    /// Components whose parameters stay fixed.
    pub frozen: Vec<usize>,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-4,
            decay_every: 100_000,
            decay_factor: 0.5,
            iterations: 1000,
            batch_size: 256,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 1.0,
            skip_norm: 1000.0,
            frozen: Vec::new(),
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::InvalidConfig("decay_every must be >= 1".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::InvalidConfig("grad_clip_norm must be > 0".into()));
        }
        self.loss.validate()
    }

    pub fn learning_rate_at(&self, iteration: u64) -> f64 {
        self.learning_rate * self.decay_factor.powi((iteration / self.decay_every) as i32)
    }

    /// Places the overlap ramp over 10%..20% of `iterations` and the
    /// learning-rate halving every 20%, the same proportions as the
    /// long-run defaults.
    pub fn scaled_to(mut self, iterations: u64) -> Self {
        self.iterations = iterations;
        self.loss.ramp_start = iterations / 10;
        self.loss.ramp_end = (iterations / 5).max(self.loss.ramp_start);
        self.decay_every = (iterations / 5).max(1);
        self
    }
}

/// Offsets of each component's block in the concatenated parameter vector.
pub fn param_offsets(scene: &CompositeScene) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(scene.len() + 1);
    let mut acc = 0;
    for f in &scene.components {
        offsets.push(acc);
        acc += f.param_count();
    }
    offsets.push(acc);
    offsets
}

pub fn scene_params(scene: &CompositeScene) -> Vec<f64> {
    scene.components.iter().flat_map(|f| f.param_vector()).collect()
}

pub fn with_scene_params(scene: &CompositeScene, params: &[f64]) -> Result<CompositeScene> {
    let offsets = param_offsets(scene);
    if params.len() != offsets[scene.len()] {
        return Err(Error::Dimension(format!(
            "scene has {} parameters, got {}",
            offsets[scene.len()],
            params.len()
        )));
    }
    let components = scene
        .components
        .iter()
        .enumerate()
        .map(|(i, f)| f.set_params(&params[offsets[i]..offsets[i + 1]]))
        .collect::<Result<_>>()?;
    Ok(CompositeScene {
        components,
        t_far: scene.t_far,
    })
}

fn component_gradients(scene: &CompositeScene, x: &Vec3, d: &Vec3) -> Result<Vec<FieldGradient>> {
    scene.components.iter().map(|f| f.eval_gradient(x, d)).collect()
}

fn ray_gradient(
    scene: &CompositeScene,
    offsets: &[usize],
    sample: &RgbdSample,
    draws: &RayDraws,
    k_o: f64,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    let ray = &sample.ray;
    let mut g = vec![0.0; offsets[scene.len()]];

    let xs = ray.at(draws.surface_t(sample));
    let surf = component_gradients(scene, &xs, &ray.direction)?;
    let sigmas: Vec<f64> = surf.iter().map(|s| s.sample.sigma).collect();
    let sigma = sigmas.iter().skip(1).fold(sigmas[0], |a, s| a + s);

    // -log max(sigma, floor)
    if sigma > DENSITY_LOG_FLOOR {
        for (i, s) in surf.iter().enumerate() {
            for (j, ds) in s.d_sigma.iter().enumerate() {
                g[offsets[i] + j] -= ds / sigma;
            }
        }
    }

    let n = draws.free_t.len() as f64;
    for (t, q) in draws.free_t.iter().zip(&draws.free_q) {
        let free = component_gradients(scene, &ray.at(*t), &ray.direction)?;
        let scale = 1.0 / (q * n);
        for (i, s) in free.iter().enumerate() {
            for (j, ds) in s.d_sigma.iter().enumerate() {
                g[offsets[i] + j] += ds * scale;
            }
        }
    }

    if sigma > 0.0 {
        let mut color = [0.0; 3];
        for s in &surf {
            let r = s.sample.sigma / sigma;
            for k in 0..3 {
                color[k] += s.sample.color[k] * r;
            }
        }
        let var = cfg.sigma_c * cfg.sigma_c;
        let resid: [f64; 3] = std::array::from_fn(|k| -(sample.color[k] - color[k]) / var);
        for (i, s) in surf.iter().enumerate() {
            let r = s.sample.sigma / sigma;
            for j in 0..s.d_sigma.len() {
                let mut dl = 0.0;
                for k in 0..3 {
                    let dc = r * s.d_color[k][j] + (s.sample.color[k] - color[k]) / sigma * s.d_sigma[j];
                    dl += resid[k] * dc;
                }
                g[offsets[i] + j] += dl;
            }
        }
    }

    if k_o != 0.0 && scene.len() > 1 && overlap_from_sigmas(&sigmas) > 0.0 {
        let m = crate::compose::argmax_lowest(&sigmas).unwrap_or(0);
        for (i, s) in surf.iter().enumerate() {
            if i == m {
                continue;
            }
            for (j, ds) in s.d_sigma.iter().enumerate() {
                g[offsets[i] + j] += k_o * ds;
            }
        }
    }
    Ok(g)
}

/// Loss and its gradient over the concatenated parameters for fixed draws.
pub fn loss_gradient_with(
    scene: &CompositeScene,
    batch: &[RgbdSample],
    draws: &[RayDraws],
    iteration: u64,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if let Some(f) = scene.components.iter().find(|f| !f.is_differentiable()) {
        return Err(Error::NotDifferentiable(f.kind().as_str()));
    }
    let loss = evaluate_batch(scene, batch, draws, iteration, cfg)?;
    let k_o = loss.k_o;
    let offsets = param_offsets(scene);
    let per_ray: Vec<Vec<f64>> = batch
        .par_iter()
        .zip(draws.par_iter())
        .enumerate()
        .map(|(i, (s, d))| {
            ray_gradient(scene, &offsets, s, d, k_o, cfg).map_err(|e| Error::Ray {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; offsets[scene.len()]];
    for r in &per_ray {
        for (a, b) in g.iter_mut().zip(r) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok((loss, g))
}

/// Draws from `rng`, then differentiates [`crate::losses::total_loss`].
pub fn loss_gradient<R: Rng + ?Sized>(
    scene: &CompositeScene,
    batch: &[RgbdSample],
    iteration: u64,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(LossBreakdown, Vec<f64>)> {
    cfg.validate()?;
    let draws = draw_batch(batch, cfg, rng)?;
    loss_gradient_with(scene, batch, &draws, iteration, cfg)
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference gradient of the total loss, with the draws generated
/// once from `stream_rng(seed, 0)` and shared by every evaluation.
pub fn finite_diff_gradient(
    scene: &CompositeScene,
    batch: &[RgbdSample],
    iteration: u64,
    cfg: &LossConfig,
    seed: u64,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig("finite-difference step must be > 0".into()));
    }
    let draws = draw_batch(batch, cfg, &mut stream_rng(seed, 0))?;
    central_difference(
        |p| {
            let s = with_scene_params(scene, p)?;
            Ok(evaluate_batch(&s, batch, &draws, iteration, cfg)?.total)
        },
        &scene_params(scene),
        h,
    )
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over all entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClipOutcome {
    Unchanged,
    Clipped,
    Skipped,
}

/// Rescales `g` to norm `clip` if it is longer; reports `Skipped` (leaving
/// `g` untouched) if its norm exceeds `skip` or is not finite.
pub fn clip_gradient(g: &mut [f64], clip: f64, skip: f64) -> (f64, ClipOutcome) {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > skip {
        return (norm, ClipOutcome::Skipped);
    }
    if norm > clip {
        let s = clip / norm;
        g.iter_mut().for_each(|v| *v *= s);
        return (norm, ClipOutcome::Clipped);
    }
    (norm, ClipOutcome::Unchanged)
}

#[derive(Clone, Debug)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], g: &[f64], lr: f64, cfg: &FitConfig) {
        self.steps += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.steps);
        let bc2 = 1.0 - cfg.beta2.powi(self.steps);
        for j in 0..params.len() {
            self.m[j] = cfg.beta1 * self.m[j] + (1.0 - cfg.beta1) * g[j];
            self.v[j] = cfg.beta2 * self.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            params[j] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub total: f64,
    pub depth: f64,
    pub color: f64,
    pub overlap: f64,
    pub k_o: f64,
    pub learning_rate: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub trace: Vec<IterationRecord>,
    /// Final parameter vector of each component.
    pub final_params: Vec<Vec<f64>>,
    /// Excluded from serialisation so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

fn first_non_finite(l: &LossBreakdown) -> Option<&'static str> {
    if !l.depth.is_finite() {
        Some("depth")
    } else if !l.color.is_finite() {
        Some("color")
    } else if !l.overlap.is_finite() {
        Some("overlap")
    } else if !l.total.is_finite() {
        Some("total")
    } else {
        None
    }
}

/// Fits `initial` to `dataset`: each iteration draws a random batch, takes
/// the gradient, clips or skips it, applies an Adam step and projects every
/// component back to its valid parameter domain.
pub fn fit(
    initial: &CompositeScene,
    dataset: &[RgbdSample],
    cfg: &FitConfig,
) -> Result<(CompositeScene, FitReport)> {
    fit_with_observer(initial, dataset, cfg, |_, _| {})
}

/// As [`fit`], calling `observer` after every iteration.
pub fn fit_with_observer<F>(
    initial: &CompositeScene,
    dataset: &[RgbdSample],
    cfg: &FitConfig,
    mut observer: F,
) -> Result<(CompositeScene, FitReport)>
where
    F: FnMut(&IterationRecord, &CompositeScene),
{
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    if let Some(f) = initial.components.iter().find(|f| !f.is_differentiable()) {
        return Err(Error::NotDifferentiable(f.kind().as_str()));
    }
    let start = Instant::now();
    let mut scene = initial.clone();
    let offsets = param_offsets(&scene);
    let mut params = scene_params(&scene);
    let mut adam = Adam::new(params.len());
    let mut rng = stream_rng(cfg.seed, 0);
    let batch_size = cfg.batch_size.min(dataset.len());
    let mut trace = Vec::with_capacity(cfg.iterations as usize);

    for iteration in 0..cfg.iterations {
        let batch: Vec<RgbdSample> = sample_indices(&mut rng, dataset.len(), batch_size)
            .into_iter()
            .map(|i| dataset[i])
            .collect();
        let draws = draw_batch(&batch, &cfg.loss, &mut rng)?;
        let (loss, mut g) = loss_gradient_with(&scene, &batch, &draws, iteration, &cfg.loss)?;
        if let Some(term) = first_non_finite(&loss) {
            return Err(Error::NonFiniteLoss { iteration, term });
        }
        for &c in &cfg.frozen {
            if c < scene.len() {
                g[offsets[c]..offsets[c + 1]].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let (grad_norm, outcome) = clip_gradient(&mut g, cfg.grad_clip_norm, cfg.skip_norm);
        let lr = cfg.learning_rate_at(iteration);
        let skipped = outcome == ClipOutcome::Skipped;
        if !skipped {
            adam.step(&mut params, &g, lr, cfg);
            let mut next = with_scene_params(&scene, &params)?;
            next.components.iter_mut().for_each(Field::project);
            params = scene_params(&next);
            scene = next;
        }
        let record = IterationRecord {
            iteration,
            total: loss.total,
            depth: loss.depth,
            color: loss.color,
            overlap: loss.overlap,
            k_o: loss.k_o,
            learning_rate: lr,
            grad_norm,
            skipped,
        };
        observer(&record, &scene);
        trace.push(record);
    }

    let report = FitReport {
        seed: cfg.seed,
        trace,
        final_params: scene.components.iter().map(|f| f.param_vector()).collect(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((scene, report))
}

/// Midpoint-rule integral of the overlap `sum sigma_i - max sigma_i` over the
/// box `[lo, hi]` with `n` cells per axis.
pub fn integrated_overlap(scene: &CompositeScene, lo: Vec3, hi: Vec3, n: usize) -> Result<f64> {
    let h = (hi - lo) / n as f64;
    let cell = h.x * h.y * h.z;
    let slabs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let x = lo + Vec3::new((i as f64 + 0.5) * h.x, (j as f64 + 0.5) * h.y, (k as f64 + 0.5) * h.z);
                    let s = composite_eval(scene, &x, &Vec3::z())?;
                    acc += overlap_from_sigmas(&s.sigmas);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(slabs.iter().sum::<f64>() * cell)
}

/// Mean per-ray loss of a scene over a whole dataset with fixed draws.
pub fn dataset_loss(scene: &CompositeScene, dataset: &[RgbdSample], cfg: &LossConfig, seed: u64) -> Result<f64> {
    let draws = draw_batch(dataset, cfg, &mut stream_rng(seed, 0))?;
    let total: Vec<f64> = dataset
        .par_iter()
        .zip(draws.par_iter())
        .map(|(s, d)| ray_loss(scene, s, d, cfg).map(|l| l.depth + l.color))
        .collect::<Result<_>>()?;
    Ok(total.iter().sum::<f64>() / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{GaussianBlobField, PiecewiseConstantRayField, SoftSphereField};
    use crate::geometry::Ray;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn blob(c: [f64; 3], color: [f64; 3]) -> Field {
        Field::GaussianBlob(GaussianBlobField::new(Vec3::from(c), Vec3::new(0.5, 0.6, 0.4), 6.0, color))
    }

    fn batch() -> Vec<RgbdSample> {
        (0..12)
            .map(|i| {
                let ray = Ray::new(Vec3::new(0.03 * i as f64 - 0.15, 0.05, 0.0), Vec3::z(), 10.0).unwrap();
                RgbdSample::new(ray, [0.8, 0.2, 0.3], 1.6 + 0.02 * i as f64).unwrap()
            })
            .collect()
    }

    #[test]
    fn central_difference_on_quadratic() {
        let f = |x: &[f64]| Ok(3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[1]);
        let g = central_difference(f, &[1.5, -2.0], 1e-3).unwrap();
        assert_abs_diff_eq!(g[0], 6.0 * 1.5 + 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], -3.0 - 2.0 + 1.0, epsilon = 1e-9);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let scene = CompositeScene::new(vec![blob([0.0, 0.0, 2.0], [0.9, 0.1, 0.2]), blob([0.2, 0.1, 2.3], [0.1, 0.3, 0.9])], 10.0).unwrap();
        let cfg = LossConfig { ramp_start: 0, ramp_end: 0, k_o_max: 0.05, n_free_samples: 3, ..Default::default() };
        let (_, g) = loss_gradient(&scene, &batch(), 10, &cfg, &mut stream_rng(4, 0)).unwrap();
        let fd = finite_diff_gradient(&scene, &batch(), 10, &cfg, 4, 1e-5).unwrap();
        let err = max_relative_error(&g, &fd, 1e-6);
        assert!(err <= 1e-4, "max relative error {err}\n{g:?}\n{fd:?}");
    }

    #[test]
    fn overlap_gradient_vanishes_for_one_component() {
        let scene = CompositeScene::new(vec![blob([0.0, 0.0, 2.0], [0.9, 0.1, 0.2])], 10.0).unwrap();
        let on = LossConfig { ramp_start: 0, ramp_end: 0, k_o_max: 5.0, ..Default::default() };
        let off = LossConfig { k_o_max: 0.0, ..on };
        let (_, a) = loss_gradient(&scene, &batch(), 1, &on, &mut stream_rng(2, 0)).unwrap();
        let (_, b) = loss_gradient(&scene, &batch(), 1, &off, &mut stream_rng(2, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn color_gradient_vanishes_at_matching_color() {
        let color = [0.8, 0.2, 0.3];
        let scene = CompositeScene::new(vec![blob([0.0, 0.0, 2.0], color)], 10.0).unwrap();
        let (_, g) = loss_gradient(&scene, &batch(), 0, &LossConfig::default(), &mut stream_rng(0, 0)).unwrap();
        for k in 7..10 {
            assert_eq!(g[k], 0.0);
        }
    }

    #[test]
    fn piecewise_field_is_rejected() {
        let pw = Field::PiecewiseRay(PiecewiseConstantRayField::new(Vec3::zeros(), Vec3::z(), vec![0.0], vec![1.0], vec![[1.0; 3]]).unwrap());
        let scene = CompositeScene::new(vec![pw], 10.0).unwrap();
        assert!(matches!(
            loss_gradient(&scene, &batch(), 0, &LossConfig::default(), &mut stream_rng(0, 0)),
            Err(Error::NotDifferentiable(_))
        ));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        let (norm, o) = clip_gradient(&mut g, 1.0, 1000.0);
        assert_eq!(norm, 5.0);
        assert_eq!(o, ClipOutcome::Clipped);
        assert!((g[0].hypot(g[1]) - 1.0).abs() <= 1e-12);
        let mut big = vec![2000.0];
        assert_eq!(clip_gradient(&mut big, 1.0, 1000.0).1, ClipOutcome::Skipped);
        assert_eq!(big, vec![2000.0]);
    }

    #[test]
    fn learning_rate_halves() {
        let cfg = FitConfig { decay_every: 10, ..Default::default() };
        assert_eq!(cfg.learning_rate_at(9), 4e-4);
        assert_eq!(cfg.learning_rate_at(10), 2e-4);
        assert_eq!(cfg.learning_rate_at(25), 1e-4);
    }

    fn sphere_dataset(center: Vec3) -> (CompositeScene, Vec<RgbdSample>) {
        let truth = CompositeScene::new(
            vec![Field::SoftSphere(SoftSphereField {
                center,
                radius: 0.5,
                softness: 0.05,
                amplitude: 10.0,
                color: [0.7, 0.3, 0.2],
                sigma_max: 10.0,
            })],
            10.0,
        )
        .unwrap();
        // Rays along +x, +y and +z so every center coordinate is observed.
        let mut data = Vec::new();
        for axis in 0..3 {
            let d = Vec3::ith(axis, 1.0);
            let (u, v) = (Vec3::ith((axis + 1) % 3, 1.0), Vec3::ith((axis + 2) % 3, 1.0));
            for i in 0..7 {
                for j in 0..7 {
                    let o = center - 3.0 * d + u * (-0.3 + 0.1 * i as f64) + v * (-0.3 + 0.1 * j as f64);
                    let ray = Ray::new(o, d, 10.0).unwrap();
                    let b = -(o - center).dot(&d);
                    let depth = b - (b * b - ((o - center).norm_squared() - 0.25)).sqrt();
                    data.push(RgbdSample::new(ray, [0.7, 0.3, 0.2], depth).unwrap());
                }
            }
        }
        (truth, data)
    }

    #[test]
    fn ground_truth_init_is_near_stationary() {
        let (truth, data) = sphere_dataset(Vec3::zeros());
        let cfg = FitConfig { iterations: 100, batch_size: 32, ..Default::default() };
        let (fitted, report) = fit(&truth, &data, &cfg).unwrap();
        assert_eq!(report.trace.len(), 100);
        // Center, radius and color; softness and amplitude drift towards a
        // harder surface because the jittered depth likelihood prefers one.
        let (a, b) = (scene_params(&fitted), scene_params(&truth));
        for j in [0, 1, 2, 3, 6, 7, 8] {
            assert!((a[j] - b[j]).abs() <= 0.01, "param {j}: {} -> {}", b[j], a[j]);
        }
        assert!(a[4] <= b[4]);
    }

    #[test]
    fn fit_is_deterministic() {
        let (truth, data) = sphere_dataset(Vec3::zeros());
        let cfg = FitConfig { iterations: 20, batch_size: 16, seed: 9, ..Default::default() };
        let (_, a) = fit(&truth, &data, &cfg).unwrap();
        let (_, b) = fit(&truth, &data, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn recovers_offset_sphere_center() {
        let (truth, data) = sphere_dataset(Vec3::zeros());
        let mut init = truth.clone();
        if let Field::SoftSphere(s) = &mut init.components[0] {
            s.center.x += 0.5;
        }
        let cfg = FitConfig { learning_rate: 1e-2, batch_size: 64, ..Default::default() }.scaled_to(1000);
        let (fitted, _) = fit(&init, &data, &cfg).unwrap();
        let c = fitted.components[0].center().unwrap();
        assert!(c.norm() <= 0.05, "center {c:?}");
    }

    #[test]
    fn overlap_integral_of_disjoint_and_coincident_blobs() {
        let far = CompositeScene::new(vec![blob([-5.0, 0.0, 0.0], [1.0; 3]), blob([5.0, 0.0, 0.0], [1.0; 3])], 10.0).unwrap();
        let same = CompositeScene::new(vec![blob([0.0; 3], [1.0; 3]), blob([0.0; 3], [1.0; 3])], 10.0).unwrap();
        let lo = Vec3::repeat(-2.0);
        let hi = Vec3::repeat(2.0);
        let a = integrated_overlap(&far, lo, hi, 20).unwrap();
        let b = integrated_overlap(&same, lo, hi, 20).unwrap();
        assert!(a < 1e-6 && b > 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn clipped_norm_never_exceeds_bound(g in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let mut g = g;
            let (_, outcome) = clip_gradient(&mut g, 1.0, 1000.0);
            prop_assert!(outcome != ClipOutcome::Skipped);
            prop_assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-9);
        }
    }
}
