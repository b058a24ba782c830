//! Monte-Carlo checks of the weighted estimator `Σ w_t x_t` of a new
//! observation `x_{T+1}` when history ticks come from shifted Gaussians.
//!
//! With `x_t ~ N(μ_t, σ²)`, `|μ_t − μ_{T+1}| = c·d*_t` and weights computed
//! from `d*`, the expected squared error is
//! `Σ w_t² σ² + (Σ w_t c d*_t)² + σ²`, which lies in
//! `[σ², (1 + max w) σ² + c·max d*]` as long as `c·max d* ≤ 1` (the squared
//! bias term is bounded by `c·max d*` only there).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::weighting::compute_weights;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremTrialSpec {
    pub sigma: f64,
    pub c: f64,
    /// One distance per history tick; its length is `T`.
    pub d_star: Vec<f64>,
    pub mu_next: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl TheoremTrialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::input("sigma must be positive"));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::input("c must be non-negative"));
        }
        if self.d_star.is_empty() || self.d_star.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::input("d* must be a non-empty vector of non-negative distances"));
        }
        if self.n_trials < 2 {
            return Err(Error::input("need at least two trials"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub t: usize,
    pub n_trials: usize,
    pub max_w: f64,
    pub mse: f64,
    /// Standard error of `mse`.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    /// Closed-form expected squared error.
    pub expected: f64,
    /// Whether `c·max d* ≤ 1`, the range where `upper` is a valid bound.
    pub bound_applies: bool,
    /// `lower − 3·se ≤ mse ≤ upper + 3·se`.
    pub within_bounds: bool,
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(n_trials: usize) -> Vec<(usize, usize)> {
    (0..n_trials.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(n_trials - c * CHUNK)))
        .collect()
}

fn mean_and_se(sum: f64, sumsq: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Estimates the squared error of the weighted estimator over `n_trials`.
pub fn validate_theorems(spec: &TheoremTrialSpec) -> Result<TheoremReport> {
    spec.validate()?;
    let w = compute_weights(&spec.d_star)?.w;
    let mu: Vec<f64> = spec.d_star.iter().map(|d| spec.mu_next + spec.c * d).collect();
    let sigma = spec.sigma;

    let partial: Vec<(f64, f64)> = chunks(spec.n_trials)
        .into_par_iter()
        .map(|(c, n)| {
            let mut rng = chunk_rng(spec.seed, c);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let mut est = 0.0;
                for (wt, mt) in w.iter().zip(&mu) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    est += wt * (mt + sigma * z);
                }
                let z: f64 = StandardNormal.sample(&mut rng);
                let e = est - (spec.mu_next + sigma * z);
                s += e * e;
                s2 += e * e * e * e;
            }
            (s, s2)
        })
        .collect();
    let (sum, sumsq) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let (mse, se) = mean_and_se(sum, sumsq, spec.n_trials);

    let max_w = w.iter().copied().fold(0.0, f64::max);
    let max_d = spec.d_star.iter().copied().fold(0.0, f64::max);
    let var = sigma * sigma;
    let bias: f64 = w.iter().zip(&spec.d_star).map(|(wt, d)| wt * spec.c * d).sum();
    let expected = w.iter().map(|wt| wt * wt).sum::<f64>() * var + bias * bias + var;
    let lower = var;
    let upper = (1.0 + max_w) * var + spec.c * max_d;
    Ok(TheoremReport {
        t: spec.d_star.len(),
        n_trials: spec.n_trials,
        max_w,
        mse,
        se,
        lower,
        upper,
        expected,
        bound_applies: spec.c * max_d <= 1.0,
        within_bounds: lower - 3.0 * se <= mse && mse <= upper + 3.0 * se,
    })
}

/// `count` seeded random specs with `T ≤ 50`, some zero distances, and
/// `c·max d* ≤ 1` so the upper bound applies.
pub fn random_specs(count: usize, n_trials: usize, seed: u64) -> Vec<TheoremTrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let t = rng.random_range(1..=50);
            let d_star: Vec<f64> = (0..t)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect();
            let max_d = d_star.iter().copied().fold(0.0, f64::max);
            let c = if max_d > 0.0 { rng.random_range(0.0..1.0) / max_d } else { rng.random_range(0.0..1.0) };
            TheoremTrialSpec {
                sigma: rng.random_range(0.2..2.0),
                c,
                d_star,
                mu_next: rng.random_range(-1.0..1.0),
                n_trials,
                seed: seed.wrapping_add(1 + i as u64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfiniteDataRow {
    pub t: usize,
    pub mse: f64,
    pub se: f64,
    /// `σ²(1 + 1/T)`, exact for equal weights.
    pub expected: f64,
    pub mean_estimate: f64,
    pub mean_se: f64,
    /// Mean of the Bessel-corrected sample variance.
    pub variance_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfiniteDataReport {
    pub sigma: f64,
    pub mu: f64,
    pub n_trials: usize,
    pub rows: Vec<InfiniteDataRow>,
    /// Whether the estimated error strictly decreases as `T` grows.
    pub monotone: bool,
}

/// Equal-weight estimator on same-distribution history of growing length.
/// All lengths share each trial's draws (the shorter histories are prefixes
/// of the longest), which keeps the comparison across `T` low-noise.
pub fn validate_infinite_data(sigma: f64, mu: f64, ts: &[usize], n_trials: usize, seed: u64) -> Result<InfiniteDataReport> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::input("sigma must be positive"));
    }
    if ts.is_empty() || ts[0] < 2 || ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("history lengths must be ascending and at least 2"));
    }
    if n_trials < 2 {
        return Err(Error::input("need at least two trials"));
    }
    let k = ts.len();
    let t_max = ts[k - 1];

    // per length: Σ err², Σ err⁴, Σ mean, Σ mean², Σ sample variance
    let partial: Vec<Vec<[f64; 5]>> = chunks(n_trials)
        .into_par_iter()
        .map(|(c, n)| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = vec![[0.0; 5]; k];
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                let x_new = mu + sigma * z;
                let (mut s, mut s2) = (0.0, 0.0);
                let mut next = 0;
                for t in 1..=t_max {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = mu + sigma * z;
                    s += x;
                    s2 += x * x;
                    if t == ts[next] {
                        let tf = t as f64;
                        let mean = s / tf;
                        let e = mean - x_new;
                        let a = &mut acc[next];
                        a[0] += e * e;
                        a[1] += e * e * e * e;
                        a[2] += mean;
                        a[3] += mean * mean;
                        a[4] += (s2 - tf * mean * mean) / (tf - 1.0);
                        next += 1;
                    }
                }
            }
            acc
        })
        .collect();

    let mut rows = Vec::with_capacity(k);
    for (i, &t) in ts.iter().enumerate() {
        let tot = partial.iter().fold([0.0; 5], |mut a, p| {
            for j in 0..5 {
                a[j] += p[i][j];
            }
            a
        });
        let (mse, se) = mean_and_se(tot[0], tot[1], n_trials);
        let (mean_estimate, mean_se) = mean_and_se(tot[2], tot[3], n_trials);
        rows.push(InfiniteDataRow {
            t,
            mse,
            se,
            expected: sigma * sigma * (1.0 + 1.0 / t as f64),
            mean_estimate,
            mean_se,
            variance_estimate: tot[4] / n_trials as f64,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].mse < w[0].mse);
    Ok(InfiniteDataReport {
        sigma,
        mu,
        n_trials,
        rows,
        monotone,
    })
}
