//! Detection quality, the topology-blind baseline, the scaling benchmark and
//! Monte-Carlo checks of the weighted-estimator error bounds.

mod bench;
mod metrics;
mod theorems;

use std::time::Instant;

use serde::Serialize;

pub use bench::{linear_fit, scale_bench, BenchConfig, BenchReport, BenchRow, LinearFit};
pub use metrics::{auc, f_measure_topk, top_k_indices, TopK};
pub use theorems::{
    random_specs, validate_infinite_data, validate_theorems, InfiniteDataReport, InfiniteDataRow, TheoremReport, TheoremTrialSpec,
};

use crate::case_io::{Label, Scenario, ScoreRecord};
use crate::detector::{Detector, DetectorConfig, ScoreSeries, Weighting};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ticks: usize,
    pub positives: usize,
    pub auc: f64,
    pub top_k: TopK,
    /// Wall-clock seconds of the detection loop, when it was timed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detect_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms_per_tick_per_sensor: Option<f64>,
}

/// Pairs scores with labels by tick; every label needs a score.
pub fn align(scores: &[(usize, f64)], labels: &[Label]) -> Result<(Vec<f64>, Vec<bool>)> {
    let by_tick: std::collections::HashMap<usize, f64> = scores.iter().copied().collect();
    labels
        .iter()
        .map(|l| {
            by_tick
                .get(&l.tick)
                .map(|&s| (s, l.is_anomaly))
                .ok_or_else(|| Error::validation(format!("no score for labelled tick {}", l.tick)))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

pub fn evaluate_scores(scores: &[f64], labels: &[bool], k: usize) -> Result<EvalReport> {
    Ok(EvalReport {
        ticks: scores.len(),
        positives: labels.iter().filter(|&&l| l).count(),
        auc: auc(scores, labels)?,
        top_k: f_measure_topk(scores, labels, k)?,
        detect_seconds: None,
        ms_per_tick_per_sensor: None,
    })
}

/// Evaluates a score stream read back from disk.
pub fn evaluate_records(records: &[ScoreRecord], labels: &[Label], k: usize) -> Result<EvalReport> {
    let pairs: Vec<(usize, f64)> = records.iter().map(|r| (r.tick, r.score)).collect();
    let (s, l) = align(&pairs, labels)?;
    evaluate_scores(&s, &l, k)
}

/// Runs and times the detector on `scenario`, then evaluates it.
pub fn evaluate_detection(scenario: &Scenario, config: &DetectorConfig, k: usize) -> Result<(ScoreSeries, EvalReport)> {
    let start = Instant::now();
    let series = Detector::for_grid(scenario.grid.clone(), config.clone())?.detect(scenario)?;
    let secs = start.elapsed().as_secs_f64();
    let labels: Vec<bool> = scenario.labels.iter().map(|l| l.is_anomaly).collect();
    let mut report = evaluate_scores(&series.global(), &labels, k)?;
    report.detect_seconds = Some(secs);
    report.ms_per_tick_per_sensor = Some(1e3 * secs / (series.ticks.len() * series.sensors.len()).max(1) as f64);
    Ok((series, report))
}

/// The same pipeline with every history tick weighted equally.
pub fn ablation_uniform(scenario: &Scenario, config: &DetectorConfig, k: usize) -> Result<EvalReport> {
    let cfg = DetectorConfig {
        weighting: Weighting::Uniform,
        ..config.clone()
    };
    evaluate_detection(scenario, &cfg, k).map(|(_, r)| r)
}
