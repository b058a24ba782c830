//! Temporal weights from per-tick graph distances.
//!
//! Weights minimise `Σ w_t d_t + ½‖w‖²` over the probability simplex. The
//! minimiser has the closed form `w_t = max(λ* − d_t, 0)` where `λ*` is the
//! unique level at which the weights sum to one.

use std::ops::RangeInclusive;

use crate::distance::{DistanceEngine, DistanceRequest, Measure};
use crate::error::{Error, Result};
use crate::grid::{Topology, TopologySeries};

pub const DEFAULT_SCALE_FACTOR: f64 = 0.005;

/// Distances of a run of history ticks to the current topology.
#[derive(Debug, Clone, PartialEq)]
pub struct TickDistances {
    /// First tick covered; `d[i]` belongs to tick `first_tick + i`.
    pub first_tick: usize,
    pub d: Vec<f64>,
    pub d_scaled: Vec<f64>,
    pub scale_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub lambda_star: f64,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("cannot weight an empty history"));
        }
        let u = 1.0 / n as f64;
        Ok(WeightVector {
            w: vec![u; n],
            lambda_star: u,
        })
    }

    pub fn n_positive(&self) -> usize {
        self.w.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn max(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max)
    }
}

/// Distance of every tick in `ticks` to `current`, one evaluation per
/// topology segment. `sensor` selects the locally sensitive measure's sensor.
pub fn extend_to_ticks(
    engine: &DistanceEngine,
    series: &TopologySeries,
    current: &Topology,
    measure: Measure,
    sensor: Option<usize>,
    ticks: RangeInclusive<usize>,
    scale_factor: f64,
) -> Result<TickDistances> {
    let first = *ticks.start();
    let d = broadcast_segments(series, ticks, |seg| {
        engine.distance(&DistanceRequest {
            topo_a: &series.segments()[seg].topology,
            topo_b: current,
            measure,
            sensor,
        })
    })?;
    let d_scaled = normalize_scale(&d, scale_factor)?;
    Ok(TickDistances {
        first_tick: first,
        d,
        d_scaled,
        scale_factor,
    })
}

/// Evaluates `per_segment` once for every segment overlapping `ticks` and
/// repeats the value over that segment's ticks.
pub fn broadcast_segments(
    series: &TopologySeries,
    ticks: RangeInclusive<usize>,
    mut per_segment: impl FnMut(usize) -> Result<f64>,
) -> Result<Vec<f64>> {
    let (first, last) = (*ticks.start(), *ticks.end());
    if first == 0 || last > series.total_ticks() {
        return Err(Error::input(format!(
            "ticks {first}..={last} outside the series 1..={}",
            series.total_ticks()
        )));
    }
    let mut d = Vec::with_capacity((last + 1).saturating_sub(first));
    for (i, seg) in series.segments().iter().enumerate() {
        let lo = seg.start.max(first);
        let hi = seg.end.min(last);
        if lo > hi {
            continue;
        }
        let value = per_segment(i)?;
        d.extend(std::iter::repeat_n(value, hi - lo + 1));
    }
    Ok(d)
}

/// Divides by the largest distance and multiplies by `scale_factor`.
/// An all-zero vector is returned unchanged.
pub fn normalize_scale(d: &[f64], scale_factor: f64) -> Result<Vec<f64>> {
    if !(scale_factor > 0.0 && scale_factor.is_finite()) {
        return Err(Error::input("scale factor must be positive and finite"));
    }
    if let Some(bad) = d.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::input(format!("distances must be finite and non-negative, got {bad}")));
    }
    let max = d.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(d.to_vec());
    }
    Ok(d.iter().map(|x| scale_factor * x / max).collect())
}

/// Exact simplex-constrained weights via a breakpoint scan over sorted `d`.
pub fn compute_weights(d: &[f64]) -> Result<WeightVector> {
    if d.is_empty() {
        return Err(Error::input("cannot weight an empty history"));
    }
    if let Some(bad) = d.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::input(format!("distances must be finite and non-negative, got {bad}")));
    }
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    // with the k smallest distances active, Σ (λ − d_i) = 1 gives λ = (1 + Σ d_i) / k
    let mut prefix = 0.0;
    let mut lambda = 0.0;
    for (k, &dk) in sorted.iter().enumerate() {
        prefix += dk;
        let candidate = (1.0 + prefix) / (k + 1) as f64;
        lambda = candidate;
        match sorted.get(k + 1) {
            Some(&next) if candidate > next => continue,
            _ => break,
        }
    }
    let w = d.iter().map(|&x| (lambda - x).max(0.0)).collect();
    Ok(WeightVector { w, lambda_star: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_scale(&[0.0, 0.0, 0.0], 0.005).unwrap(), vec![0.0; 3]);
        assert!(close(&normalize_scale(&[0.0, 4.0], 0.005).unwrap(), &[0.0, 0.005]));
        assert!(close(&normalize_scale(&[1.0, 2.0, 4.0], 0.005).unwrap(), &[0.00125, 0.0025, 0.005]));
        assert!(normalize_scale(&[1.0, -0.5], 0.005).is_err());
        assert!(normalize_scale(&[1.0], 0.0).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = compute_weights(&[0.0; 4]).unwrap();
        assert!(close(&w.w, &[0.25; 4]));
        assert_eq!(w.lambda_star, 0.25);

        let w = compute_weights(&[0.0, 0.5]).unwrap();
        assert_eq!(w.lambda_star, 0.75);
        assert!(close(&w.w, &[0.75, 0.25]));

        let w = compute_weights(&[0.0, 2.0]).unwrap();
        assert_eq!(w.lambda_star, 1.0);
        assert_eq!(w.w, vec![1.0, 0.0]);

        assert!(compute_weights(&[]).is_err());
    }

    #[test]
    fn equal_distances_give_uniform_weights() {
        for v in [0.0, 0.003, 7.0] {
            let w = compute_weights(&[v; 5]).unwrap();
            assert!(w.w.iter().all(|x| (x - 0.2).abs() < 1e-15));
        }
    }

    proptest! {
        #[test]
        fn kkt_and_monotone(d in prop::collection::vec(0.0..0.01f64, 1..60)) {
            let w = compute_weights(&d).unwrap();
            let sum: f64 = w.w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (i, (&wi, &di)) in w.w.iter().zip(&d).enumerate() {
                prop_assert!(wi >= 0.0);
                prop_assert_eq!(wi, (w.lambda_star - di).max(0.0));
                for (j, &dj) in d.iter().enumerate() {
                    if di <= dj {
                        prop_assert!(wi >= w.w[j], "{} {}", i, j);
                    }
                }
            }
        }
    }
}
