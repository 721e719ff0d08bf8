//! Segmentation and reconstruction metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer label per pixel, row-major, with an optional foreground mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub foreground: Option<Vec<bool>>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            foreground: None,
        })
    }

    /// Foreground is every pixel whose label is not `background`.
    pub fn with_background(mut self, background: u32) -> Self {
        self.foreground = Some(self.labels.iter().map(|l| *l != background).collect());
        self
    }

    pub fn with_foreground(mut self, foreground: Vec<bool>) -> Result<Self> {
        if foreground.len() != self.labels.len() {
            return Err(Error::Dimension("foreground mask size differs from labels".into()));
        }
        self.foreground = Some(foreground);
        Ok(self)
    }
}

fn pairs(n: u64) -> i128 {
    let n = n as i128;
    n * (n - 1) / 2
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Adjusted Rand index of two labelings of the same items.
///
/// Evaluated as the exact rational
/// `2 (N I - A B) / (N (A + B) - 2 A B)` with `I = sum C(n_ij, 2)`,
/// `A = sum C(a_i, 2)`, `B = sum C(b_j, 2)`, `N = C(n, 2)`, reduced and
/// divided once. A zero denominator only occurs for identical partitions
/// (all items together, or all apart) and yields 1.
pub fn ari_labels(pred: &[u32], truth: &[u32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predicted labels vs {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::Metric(format!("ARI needs at least 2 pixels, got {n}")));
    }
    let mut joint: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut rows: BTreeMap<u32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<u32, u64> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        *joint.entry((*p, *t)).or_default() += 1;
        *rows.entry(*p).or_default() += 1;
        *cols.entry(*t).or_default() += 1;
    }
    let index: i128 = joint.values().map(|c| pairs(*c)).sum();
    let a: i128 = rows.values().map(|c| pairs(*c)).sum();
    let b: i128 = cols.values().map(|c| pairs(*c)).sum();
    let total = pairs(n as u64);
    let mut num = 2 * (total * index - a * b);
    let mut den = total * (a + b) - 2 * a * b;
    if den == 0 {
        return Ok(1.0);
    }
    let g = gcd(num, den);
    if g > 1 {
        num /= g;
        den /= g;
    }
    Ok(num as f64 / den as f64)
}

/// ARI over all pixels, or over the ground-truth foreground.
pub fn ari(pred: &LabelMap, truth: &LabelMap, restrict_to_fg: bool) -> Result<f64> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    if !restrict_to_fg {
        return ari_labels(&pred.labels, &truth.labels);
    }
    let fg = truth
        .foreground
        .as_ref()
        .ok_or_else(|| Error::Metric("foreground ARI needs a ground-truth foreground mask".into()))?;
    let (p, t): (Vec<u32>, Vec<u32>) = pred
        .labels
        .iter()
        .zip(&truth.labels)
        .zip(fg)
        .filter(|(_, keep)| **keep)
        .map(|((p, t), _)| (*p, *t))
        .unzip();
    ari_labels(&p, &t)
}

/// Mean squared difference over the selected pixels and all their channels.
/// `channels` values are stored per pixel; `mask` selects pixels.
pub fn mse(a: &[f64], b: &[f64], channels: usize, mask: Option<&[bool]>) -> Result<f64> {
    if a.len() != b.len() || channels == 0 || a.len() % channels != 0 {
        return Err(Error::Dimension(format!(
            "images of {} and {} values with {channels} channels",
            a.len(),
            b.len()
        )));
    }
    let pixels = a.len() / channels;
    if let Some(m) = mask {
        if m.len() != pixels {
            return Err(Error::Dimension(format!("mask has {} pixels, images have {pixels}", m.len())));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in 0..pixels {
        if mask.map_or(true, |m| m[p]) {
            for c in 0..channels {
                let d = a[p * channels + c] - b[p * channels + c];
                sum += d * d;
            }
            count += channels;
        }
    }
    if count == 0 {
        return Err(Error::Metric("mask selects no pixels".into()));
    }
    Ok(sum / count as f64)
}

/// Every partition of `n` items into at most `max_blocks` blocks, as
/// restricted growth strings (item 0 is in block 0, and each item's block is
/// at most one more than the largest block used before it).
pub fn partitions_up_to(n: usize, max_blocks: u32) -> Vec<Vec<u32>> {
    fn grow(prefix: &mut Vec<u32>, used: u32, n: usize, max_blocks: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=used.min(max_blocks - 1) {
            prefix.push(b);
            grow(prefix, used.max(b + 1), n, max_blocks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 && max_blocks > 0 {
        grow(&mut vec![0], 1, n, max_blocks, &mut out);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ari: f64,
    pub fg_ari: f64,
    pub mse: f64,
    pub fg_depth_mse: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Pair-counting form: a = pairs together in both, d = apart in both.
    fn pair_count_oracle(p: &[u32], t: &[u32]) -> f64 {
        let (mut a, mut b, mut c, mut d) = (0i128, 0i128, 0i128, 0i128);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                match (p[i] == p[j], t[i] == t[j]) {
                    (true, true) => a += 1,
                    (true, false) => b += 1,
                    (false, true) => c += 1,
                    (false, false) => d += 1,
                }
            }
        }
        let num = 2 * (a * d - b * c);
        let den = (a + b) * (b + d) + (a + c) * (c + d);
        if den == 0 {
            return 1.0;
        }
        let g = gcd(num, den);
        (num / g) as f64 / (den / g) as f64
    }

    #[test]
    fn identical_labelings_score_one() {
        assert_eq!(ari_labels(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]).unwrap(), 1.0);
        assert_eq!(ari_labels(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari_labels(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn four_pixel_example() {
        let p = [0, 0, 1, 1];
        let t = [0, 0, 1, 2];
        // Pairs: (0,1) together in both; (2,3) together only in pred; 4 apart in both.
        // a=1, b=1, c=0, d=4 -> 2(4 - 0) / (2*5 + 1*4) = 8/14.
        assert_eq!(ari_labels(&p, &t).unwrap(), 8.0 / 14.0);
        assert_eq!(ari_labels(&p, &t).unwrap(), pair_count_oracle(&p, &t));
    }

    #[test]
    fn all_small_partitions_match_pair_counting() {
        for n in 2..=6 {
            let parts = partitions_up_to(n, 3);
            for p in &parts {
                for t in &parts {
                    assert_eq!(ari_labels(p, t).unwrap(), pair_count_oracle(p, t), "{p:?} {t:?}");
                }
            }
        }
    }

    #[test]
    fn random_labelings_average_near_zero() {
        let mut rng = stream_rng(12, 0);
        let truth: Vec<u32> = (0..400).map(|_| rng.gen_range(0..4)).collect();
        let mean: f64 = (0..100)
            .map(|_| {
                let p: Vec<u32> = (0..400).map(|_| rng.gen_range(0..4)).collect();
                ari_labels(&p, &truth).unwrap()
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean.abs() <= 0.05, "{mean}");
    }

    #[test]
    fn foreground_restriction_and_errors() {
        let truth = LabelMap::new(2, 2, vec![0, 1, 1, 2]).unwrap().with_background(0);
        let pred = LabelMap::new(2, 2, vec![7, 3, 3, 4]).unwrap();
        assert_eq!(ari(&pred, &truth, true).unwrap(), 1.0);
        let bare = LabelMap::new(2, 2, vec![0, 1, 1, 2]).unwrap();
        assert!(ari(&pred, &bare, true).is_err());
        assert!(ari_labels(&[1], &[1]).is_err());
        let wide = LabelMap::new(4, 1, vec![0; 4]).unwrap();
        assert!(ari(&wide, &truth, false).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.1, 0.2], &[0.1, 0.2], 1, None).unwrap(), 0.0);
        assert_abs_diff_eq!(mse(&[0.5; 12], &[0.7; 12], 3, None).unwrap(), 0.04, epsilon = 1e-15);
        let pred = [1.0, 2.0, 5.0, 4.0, 9.0];
        let truth = [1.0, 2.0, 3.0, 4.0, 0.0];
        let fg = [true, true, true, true, false];
        assert_eq!(mse(&pred, &truth, 1, Some(&fg)).unwrap(), 1.0);
        assert!(mse(&pred, &truth, 1, Some(&[false; 5])).is_err());
    }

    #[test]
    fn partition_counts_are_stirling_sums() {
        // S(4,1) + S(4,2) + S(4,3) = 1 + 7 + 6; S(8,1..3) = 1 + 127 + 966.
        assert_eq!(partitions_up_to(4, 3).len(), 14);
        assert_eq!(partitions_up_to(8, 3).len(), 1094);
    }

    fn relabel(labels: &[u32], perm: &[u32]) -> Vec<u32> {
        labels.iter().map(|l| perm[*l as usize]).collect()
    }

    proptest! {
        #[test]
        fn ari_symmetric_and_relabeling_invariant(
            p in prop::collection::vec(0u32..4, 2..40),
            seed in 0u64..1000,
        ) {
            let mut rng = stream_rng(seed, 0);
            let t: Vec<u32> = p.iter().map(|_| rng.gen_range(0..4)).collect();
            let ab = ari_labels(&p, &t).unwrap();
            prop_assert_eq!(ab, ari_labels(&t, &p).unwrap());
            let perm = [3u32, 0, 2, 1];
            prop_assert_eq!(ab, ari_labels(&relabel(&p, &perm), &t).unwrap());
            prop_assert_eq!(ab, ari_labels(&p, &relabel(&t, &perm)).unwrap());
            prop_assert_eq!(ari_labels(&p, &p).unwrap(), 1.0);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
