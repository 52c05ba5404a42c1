//! Numeric checks of the value-gap bounds for density-matched rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kdmrl::exact_unit_norm_reward;
use crate::seed::{episode_seed, stream, STREAM_THEORY};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("distributions have different supports ({0} vs {1})")]
    Support(usize, usize),
    #[error("negative probability {0}")]
    Negative(f64),
}

fn check(p: &[f64], q: &[f64]) -> Result<(), TheoryError> {
    if p.len() != q.len() {
        return Err(TheoryError::Support(p.len(), q.len()));
    }
    if let Some(&v) = p.iter().chain(q).find(|&&v| v < 0.0) {
        return Err(TheoryError::Negative(v));
    }
    Ok(())
}

/// `1/2 sum |p - q|`.
pub fn variational_distance(p: &[f64], q: &[f64]) -> Result<f64, TheoryError> {
    check(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `sum over p > q of (p - q)`; equal to the variational distance for
/// normalized inputs.
pub fn variational_distance_positive_part(p: &[f64], q: &[f64]) -> Result<f64, TheoryError> {
    check(p, q)?;
    Ok(p.iter().zip(q).filter(|(a, b)| a > b).map(|(a, b)| a - b).sum())
}

/// `sqrt(1/2 sum (sqrt p - sqrt q)^2)`.
pub fn hellinger_distance(p: &[f64], q: &[f64]) -> Result<f64, TheoryError> {
    check(p, q)?;
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>()).sqrt())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random distribution whose concentration varies from flat to spiky.
pub fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let k = rng.gen_range(1..=8);
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(k) + 1e-12).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremTrial {
    pub n_states: usize,
    pub mu_true: Vec<f64>,
    pub mu_est: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub gap: f64,
    pub bound: f64,
}

impl TheoremTrial {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound + 1e-12
    }
}

/// Value gap `|<mu, R_est> - <mu, R_true>|` after mapping both unit-norm
/// rewards into `[r_min, r_max]` with one common increasing affine map.
pub fn value_gap(mu_true: &[f64], mu_est: &[f64], r_min: f64, r_max: f64) -> f64 {
    let rt = exact_unit_norm_reward(mu_true).expect("non-zero density");
    let re = exact_unit_norm_reward(mu_est).expect("non-zero density");
    let lo = rt.iter().chain(&re).copied().fold(f64::INFINITY, f64::min);
    let hi = rt.iter().chain(&re).copied().fold(f64::NEG_INFINITY, f64::max);
    let a = if hi > lo { (r_max - r_min) / (hi - lo) } else { 0.0 };
    let map = |r: &[f64]| -> Vec<f64> { r.iter().map(|&x| r_min + a * (x - lo)).collect() };
    (dot(mu_true, &map(&re)) - dot(mu_true, &map(&rt))).abs()
}

/// Random (true, estimated) density pairs. Trial `i` draws from its own
/// stream seeded with `seed + i`.
pub fn run_theorem_trials(n_trials: usize, n_states: usize, seed: u64) -> Vec<TheoremTrial> {
    (0..n_trials)
        .map(|i| {
            let mut rng = stream(episode_seed(seed, i), STREAM_THEORY);
            let n = rng.gen_range(2..=n_states.max(2));
            let mu_true = random_distribution(n, &mut rng);
            let eps: f64 = if i % 10 == 0 { 0.0 } else { rng.gen() };
            let nu = random_distribution(n, &mut rng);
            let mu_est: Vec<f64> = mu_true.iter().zip(&nu).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
            let r_min = rng.gen_range(-2.0..1.0);
            let r_max = r_min + rng.gen_range(0.1..3.0);
            let dvar = variational_distance(&mu_true, &mu_est).expect("same support");
            TheoremTrial {
                n_states: n,
                gap: value_gap(&mu_true, &mu_est, r_min, r_max),
                bound: 3.0 * (r_max - r_min) * dvar,
                mu_true,
                mu_est,
                r_min,
                r_max,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub trials: usize,
    pub violations: usize,
    pub max_ratio: f64,
}

pub fn summarize(trials: &[TheoremTrial]) -> TheoryReport {
    TheoryReport {
        trials: trials.len(),
        violations: trials.iter().filter(|t| !t.holds()).count(),
        max_ratio: trials
            .iter()
            .filter(|t| t.bound > 0.0)
            .map(|t| t.gap / t.bound)
            .fold(0.0, f64::max),
    }
}

/// Smooth two-bump density on a line of `n` states.
pub fn ground_truth_density(n: usize) -> Vec<f64> {
    let bump = |x: f64, c: f64, w: f64| (-0.5 * ((x - c) / w).powi(2)).exp();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            bump(x, 0.3, 0.08) + 0.6 * bump(x, 0.7, 0.12)
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Gaussian kernel density estimate of `n` draws from `mu`, bandwidth
/// shrinking as `n^(-1/5)`, normalized over the states.
pub fn kde_estimate<R: Rng>(mu: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    let m = mu.len();
    let mut cdf = Vec::with_capacity(m);
    let mut acc = 0.0;
    for p in mu {
        acc += p;
        cdf.push(acc);
    }
    let mut counts = vec![0usize; m];
    for _ in 0..n {
        let u = rng.gen::<f64>() * acc;
        let k = cdf.partition_point(|&c| c <= u).min(m - 1);
        counts[k] += 1;
    }
    let h = 0.15 * m as f64 * (n as f64).powf(-0.2);
    let mut est = vec![0.0; m];
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        for (i, e) in est.iter_mut().enumerate() {
            let d = (i as f64 - j as f64) / h;
            *e += c as f64 * (-0.5 * d * d).exp();
        }
    }
    let s: f64 = est.iter().sum();
    est.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    pub median_gap: f64,
}

/// Median value gap over `seeds` repetitions for each sample count.
pub fn sample_size_trend(n_states: usize, counts: &[usize], seeds: usize, base_seed: u64) -> Vec<TrendPoint> {
    let mu = ground_truth_density(n_states);
    counts
        .iter()
        .map(|&n| {
            let mut gaps: Vec<f64> = (0..seeds)
                .map(|s| {
                    let mut rng = stream(episode_seed(base_seed, s) ^ ((n as u64) << 32), STREAM_THEORY);
                    let est = kde_estimate(&mu, n, &mut rng);
                    value_gap(&mu, &est, 0.0, 1.0)
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            let median = if seeds % 2 == 1 {
                gaps[seeds / 2]
            } else {
                0.5 * (gaps[seeds / 2 - 1] + gaps[seeds / 2])
            };
            TrendPoint { n, median_gap: median }
        })
        .collect()
}

/// True when every step decreases strictly, except at most one step that
/// merely does not increase.
pub fn decreasing_with_one_tie(values: &[f64]) -> bool {
    let mut ties = 0;
    for w in values.windows(2) {
        if w[1] > w[0] {
            return false;
        }
        if w[1] == w[0] {
            ties += 1;
        }
    }
    ties <= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_examples() {
        assert_eq!(variational_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(variational_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((variational_distance(&[0.7, 0.3], &[0.4, 0.6]).unwrap() - 0.3).abs() < 1e-15);
        assert!((variational_distance_positive_part(&[0.7, 0.3], &[0.4, 0.6]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(hellinger_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(hellinger_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(variational_distance(&[1.0], &[0.5, 0.5]), Err(TheoryError::Support(1, 2)));
        assert_eq!(hellinger_distance(&[-0.1, 1.1], &[0.5, 0.5]), Err(TheoryError::Negative(-0.1)));
    }

    #[test]
    fn identical_estimate_has_zero_gap() {
        let t = run_theorem_trials(1, 16, 4);
        assert_eq!(t[0].gap, 0.0);
        assert_eq!(t[0].bound, 0.0);
    }

    #[test]
    fn trials_are_normalized_and_hold() {
        let trials = run_theorem_trials(500, 64, 1);
        for t in &trials {
            assert!((t.mu_true.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((t.mu_est.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(t.holds());
        }
        let r = summarize(&trials);
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio > 0.0 && r.max_ratio <= 1.0);
    }

    #[test]
    fn kde_estimate_is_a_distribution() {
        let mu = ground_truth_density(32);
        let e = kde_estimate(&mu, 100, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tie_rule() {
        assert!(decreasing_with_one_tie(&[3.0, 2.0, 2.0, 1.0]));
        assert!(!decreasing_with_one_tie(&[3.0, 3.0, 2.0, 2.0]));
        assert!(!decreasing_with_one_tie(&[1.0, 2.0]));
    }
}
