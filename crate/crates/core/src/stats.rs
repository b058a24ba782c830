//! Weighted quantiles with the lower-step convention: `Q(q)` is the smallest
//! value whose cumulative weight, after sorting by value, reaches `q`.

use crate::error::{Error, Result};

/// Relative slack on the cumulative-weight comparison, so that weights which
/// are exact fractions in real arithmetic (e.g. `1/n`) hit their breakpoints.
const CUMULATIVE_EPS: f64 = 1e-12;

fn check(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::input(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::input("weights must be finite and non-negative"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("values must be finite"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::input("all weights are zero"));
    }
    Ok(total)
}

/// Quantiles of `(value, weight)` pairs already sorted by value. `qs` must be
/// ascending; `total` is the sum of the weights.
pub fn sorted_quantiles<const K: usize>(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    total: f64,
    qs: [f64; K],
) -> [f64; K] {
    let mut out = [f64::NAN; K];
    let mut next = 0;
    let mut cum = 0.0;
    let mut last = f64::NAN;
    for (v, w) in pairs {
        if w <= 0.0 {
            continue;
        }
        cum += w;
        last = v;
        while next < K && cum >= (qs[next] - CUMULATIVE_EPS) * total {
            out[next] = v;
            next += 1;
        }
        if next == K {
            return out;
        }
    }
    // rounding left the top quantiles unreached: they sit on the last value
    for o in &mut out[next..] {
        *o = last;
    }
    out
}

fn sorted_pairs(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::input(format!("quantile level {q} outside [0, 1]")));
    }
    let total = check(values, weights)?;
    Ok(sorted_quantiles(sorted_pairs(values, weights), total, [q])[0])
}

pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    weighted_quantile(values, weights, 0.5)
}

/// `Q(0.75) − Q(0.25)`.
pub fn weighted_iqr(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total = check(values, weights)?;
    let [q1, q3] = sorted_quantiles(sorted_pairs(values, weights), total, [0.25, 0.75]);
    Ok(q3 - q1)
}
