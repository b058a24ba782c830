//! Detection time against grid size, on copies of a base case chained
//! together bus by bus.

use std::time::Instant;

use serde::Serialize;

use crate::case_io::CaseFile;
use crate::dc::DcEngine;
use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::simulator::{duplicate_case, simulate_with, ScenarioSpec};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub factors: Vec<usize>,
    pub scenario: ScenarioSpec,
    pub detector: DetectorConfig,
    /// Timed detection runs per factor; the fastest is reported, as timing
    /// noise on a shared machine only ever adds time.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            factors: (3..=12).collect(),
            scenario: ScenarioSpec {
                n_sensors: Some(1),
                ..ScenarioSpec::default()
            },
            detector: DetectorConfig::default(),
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub factor: usize,
    pub buses: usize,
    pub edges: usize,
    pub ticks: usize,
    pub sensors: usize,
    pub detect_seconds: f64,
    pub ms_per_tick_per_sensor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Detection seconds against edge count.
    pub fit: LinearFit,
}

/// Ordinary least squares `y = slope·x + intercept` with its R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input("a linear fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::input("all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Simulates and times detection on each duplication factor in turn.
/// Each timed run gets freshly built engines, so no factor or distance
/// cache carries over; building them (ordering and symbolic analysis of the
/// grid) is not timed.
/// Factors run one after another so their timings do not interfere.
pub fn scale_bench(base: &CaseFile, config: &BenchConfig) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(config.factors.len());
    for &k in &config.factors {
        let case = duplicate_case(base, k)?;
        let grid = case.to_grid()?;
        let sim_engine = DcEngine::new(grid.clone())?;
        let sim = simulate_with(&config.scenario, &case, &sim_engine)?;
        drop(sim_engine);
        let scenario = sim.scenario;

        let mut times = Vec::with_capacity(config.repeats.max(1));
        let mut scores = None;
        for _ in 0..config.repeats.max(1) {
            let detector = Detector::for_grid(grid.clone(), config.detector.clone())?;
            let start = Instant::now();
            let s = detector.detect(&scenario)?;
            times.push(start.elapsed().as_secs_f64());
            scores = Some(s);
        }
        let scores = scores.expect("at least one run");
        log::debug!("factor {k} runs {times:?}");
        let secs = times.iter().copied().fold(f64::INFINITY, f64::min);

        let ticks = scores.ticks.len();
        let sensors = scores.sensors.len();
        log::info!("factor {k}: {} edges, {secs:.3} s", grid.n_branches());
        rows.push(BenchRow {
            factor: k,
            buses: grid.n_buses(),
            edges: grid.n_branches(),
            ticks,
            sensors,
            detect_seconds: secs,
            ms_per_tick_per_sensor: 1e3 * secs / (ticks * sensors).max(1) as f64,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.edges as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.detect_seconds).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(BenchReport { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_fits_perfectly() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }
}
