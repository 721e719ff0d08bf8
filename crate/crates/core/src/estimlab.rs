//! Monte Carlo estimator bias and variance.
//!
//! [`measure`] runs an estimator over independent random streams.
//! [`thin_slab_demo`] reproduces the stratified-sampling counterexample: a
//! one-unit white slab of density 100 at `t in [50, 51]` in front of a black
//! medium of density 10 beyond `t = 80`. The true color is `1 - e^-100`, but
//! with 50 stratified samples over `[0, 100]` the slab is seen only when the
//! 26th sample falls into it, so the estimator's mean is about 1/2.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, PiecewiseConstantRayField};
use crate::geometry::Vec3;
use crate::rng::{stream_rng, StreamRng};
use crate::transport::{analytic_piecewise, refine, stratified_samples, trace_at};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub n_trials: usize,
    pub reference_value: f64,
    pub bias: f64,
}

impl EstimatorStats {
    pub fn from_values(values: &[f64], reference: f64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 trials, got {n}")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
            n_trials: n,
            reference_value: reference,
            bias: mean - reference,
        })
    }

    /// `|bias| <= z * std_error`.
    pub fn within(&self, z: f64) -> bool {
        self.bias.abs() <= z * self.std_error
    }
}

/// Runs `estimator` once per trial, trial `i` on stream `(seed, i)`.
pub fn measure<F>(estimator: F, reference: f64, n_trials: usize, seed: u64) -> Result<EstimatorStats>
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    let values = run_trials(&estimator, n_trials, seed);
    EstimatorStats::from_values(&values, reference)
}

fn run_trials<T, F>(f: &F, n_trials: usize, seed: u64) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng) -> T + Sync,
{
    (0..n_trials)
        .into_par_iter()
        .map(|i| f(&mut stream_rng(seed, i as u64)))
        .collect()
}

pub const SLAB_T_FAR: f64 = 100.0;
pub const SLAB_START: f64 = 50.0;
pub const SLAB_END: f64 = 51.0;

/// The slab field along the z axis from the origin.
pub fn thin_slab_field() -> PiecewiseConstantRayField {
    PiecewiseConstantRayField::new(
        Vec3::zeros(),
        Vec3::z(),
        vec![0.0, SLAB_START, SLAB_END, 80.0],
        vec![0.0, 100.0, 0.0, 10.0],
        vec![[0.0; 3], [1.0; 3], [0.0; 3], [0.0; 3]],
    )
    .expect("static slab layout is valid")
}

/// Probability that none of `k` stratified samples on `[0, t_far)` lands in
/// `[a, b]`.
pub fn stratified_miss_probability(k: usize, t_far: f64, a: f64, b: f64) -> f64 {
    let width = t_far / k as f64;
    (0..k)
        .map(|i| {
            let lo = i as f64 * width;
            let hi = lo + width;
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            1.0 - overlap / width
        })
        .product()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinSlabReport {
    pub k: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub hierarchical: bool,
    /// Fine samples per trial when `hierarchical`.
    pub n_fine: usize,
    /// Exact color `1 - e^-100`.
    pub analytic: f64,
    /// Red channel of the renormalised color estimate.
    pub color: EstimatorStats,
    /// Fraction of trials with no sample in the slab.
    pub miss_rate: f64,
    pub miss_rate_se: f64,
    pub analytic_miss_probability: f64,
}

/// Stratified `k`-sample color estimation on the thin-slab field, optionally
/// followed by `2k` fine samples drawn from the coarse weights.
pub fn thin_slab_demo(k: usize, n_trials: usize, seed: u64, hierarchical: bool) -> Result<ThinSlabReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let pw = thin_slab_field();
    let ray = pw.ray(SLAB_T_FAR);
    let field = Field::PiecewiseRay(pw.clone());
    let n_fine = if hierarchical { 2 * k } else { 0 };

    let trial = |rng: &mut StreamRng| -> Result<(f64, bool)> {
        let t = stratified_samples(k, SLAB_T_FAR, rng);
        let mut trace = trace_at(&field, &ray, t)?;
        if hierarchical {
            trace = refine(&field, &ray, trace, n_fine, true, rng)?;
        }
        let missed = !trace.t.iter().any(|t| (SLAB_START..=SLAB_END).contains(t));
        Ok((trace.quadrature.color[0], missed))
    };
    let outcomes: Vec<(f64, bool)> = run_trials(&trial, n_trials, seed)
        .into_iter()
        .collect::<Result<_>>()?;

    let analytic = analytic_piecewise(&pw, f64::INFINITY).color[0];
    let colors: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let color = EstimatorStats::from_values(&colors, analytic)?;
    let misses = outcomes.iter().filter(|o| o.1).count() as f64;
    let miss_rate = misses / n_trials as f64;
    Ok(ThinSlabReport {
        k,
        n_trials,
        seed,
        hierarchical,
        n_fine,
        analytic,
        color,
        miss_rate,
        miss_rate_se: (miss_rate * (1.0 - miss_rate) / n_trials as f64).sqrt(),
        analytic_miss_probability: stratified_miss_probability(k, SLAB_T_FAR, SLAB_START, SLAB_END),
    })
}

impl fmt::Display for ThinSlabReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.hierarchical {
            format!("stratified + {} fine", self.n_fine)
        } else {
            "stratified".to_string()
        };
        writeln!(f, "thin-slab color estimate ({mode}, k = {}, {} trials, seed {})", self.k, self.n_trials, self.seed)?;
        writeln!(f, "  {:<26}{:>14}", "quantity", "value")?;
        writeln!(f, "  {:<26}{:>14.6}", "analytic color", self.analytic)?;
        writeln!(f, "  {:<26}{:>14.6}", "empirical mean", self.color.mean)?;
        writeln!(f, "  {:<26}{:>14.6}", "standard error", self.color.std_error)?;
        writeln!(f, "  {:<26}{:>14.6}", "bias", self.color.bias)?;
        writeln!(f, "  {:<26}{:>14.6}", "slab miss rate", self.miss_rate)?;
        writeln!(f, "  {:<26}{:>14.6}", "miss rate std. error", self.miss_rate_se)?;
        write!(f, "  {:<26}{:>14.6}", "analytic miss probability", self.analytic_miss_probability)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn constant_estimator_has_no_spread() {
        let s = measure(|_| 2.5, 2.5, 100, 0).unwrap();
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn coin_flip_statistics() {
        let s = measure(|rng| rng.gen_bool(0.5) as u8 as f64, 0.5, 10_000, 3).unwrap();
        assert!(s.within(3.0));
        assert_abs_diff_eq!(s.variance, 0.25, epsilon = 0.01);
    }

    #[test]
    fn measure_is_deterministic() {
        let est = |rng: &mut StreamRng| rng.gen::<f64>();
        assert_eq!(measure(est, 0.5, 1000, 8).unwrap(), measure(est, 0.5, 1000, 8).unwrap());
        assert!(measure(est, 0.5, 1, 8).is_err());
    }

    #[test]
    fn miss_probability_closed_form() {
        assert_abs_diff_eq!(stratified_miss_probability(50, 100.0, 50.0, 51.0), 0.5, epsilon = 1e-15);
        assert_eq!(stratified_miss_probability(10_000, 100.0, 50.0, 51.0), 0.0);
    }

    #[test]
    fn small_demo_shows_the_bias() {
        let r = thin_slab_demo(50, 2000, 1, false).unwrap();
        assert_abs_diff_eq!(r.analytic, 1.0, epsilon = 1e-15);
        assert!(r.color.mean <= 0.5 + 3.0 * r.color.std_error);
        assert!((r.miss_rate - 0.5).abs() <= 3.0 * r.miss_rate_se);
        assert!(r.color.bias.abs() > 10.0 * r.color.std_error);
        let text = r.to_string();
        assert!(text.contains("empirical mean"));
    }
}
