//! Sensor metrics, weighted robust scoring, and the detection loop.
//!
//! At tick `t` every sensor reduces the power changes on its adjacent lines to
//! three metrics (largest change, mean change, spread of changes). Each metric
//! is compared with its weighted median over the history ticks, in units of
//! the weighted IQR, where the weights come from how close each history tick's
//! topology is to the topology at `t`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::case_io::Scenario;
use crate::dc::DcEngine;
use crate::distance::{DistanceEngine, DistanceRequest, Measure, DEFAULT_ISLANDING_PENALTY};
use crate::error::{Error, Result};
use crate::grid::{adjacent_branches, SensorSet, Topology, TopologySeries};
use crate::stats::sorted_quantiles;
use crate::weighting::{broadcast_segments, compute_weights, normalize_scale, WeightVector, DEFAULT_SCALE_FACTOR};

/// Measured complex power on one line, oriented out of the sensor's bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFlow {
    pub branch: usize,
    pub p: f64,
    pub q: f64,
}

/// Readings of one sensor at one tick, sorted by branch id.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub bus: usize,
    pub flows: Vec<LineFlow>,
}

impl SensorReading {
    pub fn flow(&self, branch: usize) -> Option<&LineFlow> {
        self.flows
            .binary_search_by_key(&branch, |f| f.branch)
            .ok()
            .map(|i| &self.flows[i])
    }
}

/// All sensor readings of one tick, in sensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub tick: usize,
    pub readings: Vec<SensorReading>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineDelta {
    pub branch: usize,
    pub dp: f64,
    pub dq: f64,
}

impl LineDelta {
    pub fn magnitude(&self) -> f64 {
        self.dp.abs() + self.dq.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTriple {
    pub x_edge: f64,
    pub x_ave: f64,
    pub x_div: f64,
}

impl MetricTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x_edge, self.x_ave, self.x_div]
    }
}

/// Power change of every line adjacent to `current.bus` under `topology`.
/// A line missing from the previous tick (or the current one) reads 0 there.
pub fn sensor_deltas(
    current: &SensorReading,
    previous: Option<&SensorReading>,
    topology: &Topology,
) -> Result<Vec<LineDelta>> {
    let adjacent = adjacent_branches(topology, current.bus)?;
    Ok(adjacent
        .into_iter()
        .map(|branch| {
            let now = current.flow(branch).copied().unwrap_or_else(|| {
                log::debug!("no reading for branch {branch} at sensor bus {}", current.bus);
                LineFlow { branch, p: 0.0, q: 0.0 }
            });
            let before = previous
                .and_then(|r| r.flow(branch))
                .copied()
                .unwrap_or(LineFlow { branch, p: 0.0, q: 0.0 });
            LineDelta {
                branch,
                dp: now.p - before.p,
                dq: now.q - before.q,
            }
        })
        .collect())
}

/// Per-sensor deltas between two frames.
pub fn deltas(frame: &SensorFrame, previous: &SensorFrame, topology: &Topology) -> Result<Vec<Vec<LineDelta>>> {
    if frame.readings.len() != previous.readings.len() {
        return Err(Error::input("frames hold different sensor counts"));
    }
    frame
        .readings
        .iter()
        .zip(&previous.readings)
        .map(|(now, before)| sensor_deltas(now, Some(before), topology))
        .collect()
}

/// Max, mean and population standard deviation of the line change magnitudes.
pub fn metrics(deltas: &[LineDelta], bus: usize) -> Result<MetricTriple> {
    if deltas.is_empty() {
        return Err(Error::SensorBlind { bus });
    }
    let m: Vec<f64> = deltas.iter().map(LineDelta::magnitude).collect();
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    let var = m.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(MetricTriple {
        x_edge: m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        x_ave: mean,
        x_div: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorScore {
    pub score: f64,
    pub warmup: bool,
}

/// Largest robust z-score of `current` against the weighted history.
/// Fewer than two positively weighted ticks yields a warm-up score of 0.
pub fn score_sensor(
    history: &[MetricTriple],
    weights: &[f64],
    current: &MetricTriple,
    iqr_floor: f64,
) -> Result<SensorScore> {
    if history.len() != weights.len() {
        return Err(Error::input("history and weights differ in length"));
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Ok(SensorScore { score: 0.0, warmup: true });
    }
    let total: f64 = weights.iter().sum();
    let mut score = f64::NEG_INFINITY;
    for m in 0..3 {
        let mut pairs: Vec<(f64, f64)> = history
            .iter()
            .zip(weights)
            .map(|(h, &w)| (h.as_array()[m], w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let [q1, med, q3] = sorted_quantiles(pairs, total, [0.25, 0.5, 0.75]);
        let z = (current.as_array()[m] - med) / (q3 - q1).max(iqr_floor);
        score = score.max(z);
    }
    Ok(SensorScore { score, warmup: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One distance per history tick, shared by all sensors.
    Global,
    /// A locally sensitive distance per sensor.
    Local,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Mode::Global),
            "local" => Ok(Mode::Local),
            other => Err(Error::input(format!("unknown mode `{other}` (global|local)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Weights from topology distances.
    Topology,
    /// Every history tick weighted equally, ignoring topology.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Most recent history ticks used; `None` uses all of them.
    pub window: Option<usize>,
    pub scale_factor: f64,
    pub mode: Mode,
    /// Distance used in global mode.
    pub measure: Measure,
    pub tau: Option<f64>,
    pub iqr_floor: f64,
    pub top_k: usize,
    pub weighting: Weighting,
    pub islanding_penalty: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: None,
            scale_factor: DEFAULT_SCALE_FACTOR,
            mode: Mode::Global,
            measure: Measure::Lodf,
            tau: None,
            iqr_floor: 1e-6,
            top_k: 5,
            weighting: Weighting::Topology,
            islanding_penalty: DEFAULT_ISLANDING_PENALTY,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iqr_floor > 0.0 && self.iqr_floor.is_finite()) {
            return Err(Error::input("iqr floor must be positive"));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::input("scale factor must be positive"));
        }
        if self.window == Some(0) {
            return Err(Error::input("window must be at least 1"));
        }
        if self.tau.is_some_and(|t| !t.is_finite()) {
            return Err(Error::input("tau must be finite"));
        }
        if self.mode == Mode::Global && self.measure == Measure::LodfLocal {
            return Err(Error::input("the lodf-local measure needs --mode local"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickScore {
    pub tick: usize,
    /// Largest sensor score.
    pub score: f64,
    /// Score per sensor, in sensor order.
    pub sensor_scores: Vec<f64>,
    /// No sensor had enough weighted history.
    pub warmup: bool,
    pub alarm: Option<bool>,
    /// Failures that zeroed some or all sensor scores at this tick.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    /// Sensor bus ids (dense).
    pub sensors: Vec<usize>,
    /// Sensor bus numbers as in the case file.
    pub sensor_numbers: Vec<usize>,
    pub top_k: usize,
    pub ticks: Vec<TickScore>,
}

impl ScoreSeries {
    pub fn global(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.score).collect()
    }

    /// Sensor indices of tick `idx`, best first, ties by sensor order.
    pub fn ranking(&self, idx: usize) -> Vec<usize> {
        let s = &self.ticks[idx].sensor_scores;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        order
    }

    pub fn top(&self, idx: usize) -> Vec<(usize, f64)> {
        let s = &self.ticks[idx].sensor_scores;
        self.ranking(idx)
            .into_iter()
            .take(self.top_k)
            .map(|i| (self.sensor_numbers[i], s[i]))
            .collect()
    }
}

/// Sorted `(value, tick)` history of one metric of one sensor.
#[derive(Debug, Default, Clone)]
struct MetricHistory {
    entries: Vec<(f64, usize)>,
}

impl MetricHistory {
    fn insert(&mut self, value: f64, tick: usize) {
        let at = self
            .entries
            .partition_point(|&(v, t)| v.total_cmp(&value).then(t.cmp(&tick)).is_lt());
        self.entries.insert(at, (value, tick));
    }

    fn drop_before(&mut self, tick: usize) {
        self.entries.retain(|&(_, t)| t >= tick);
    }
}

#[derive(Debug, Default, Clone)]
struct SensorHistory {
    metrics: [MetricHistory; 3],
}

impl SensorHistory {
    /// Scores `current` with history weights `w[tick - first]`.
    fn score(&self, current: &MetricTriple, w: &[f64], first: usize, iqr_floor: f64) -> SensorScore {
        let weight = |t: usize| if t >= first { w.get(t - first).copied().unwrap_or(0.0) } else { 0.0 };
        // every metric holds the same ticks, so count on the first one
        let mut positive = 0;
        let mut total = 0.0;
        for &(_, t) in &self.metrics[0].entries {
            let wt = weight(t);
            if wt > 0.0 {
                positive += 1;
                total += wt;
            }
        }
        if positive < 2 {
            return SensorScore { score: 0.0, warmup: true };
        }
        let mut score = f64::NEG_INFINITY;
        for (m, hist) in self.metrics.iter().enumerate() {
            let pairs = hist.entries.iter().map(|&(v, t)| (v, weight(t)));
            let [q1, med, q3] = sorted_quantiles(pairs, total, [0.25, 0.5, 0.75]);
            let z = (current.as_array()[m] - med) / (q3 - q1).max(iqr_floor);
            score = score.max(z);
        }
        SensorScore { score, warmup: false }
    }
}

/// Runs the detection loop over a topology series and its frames.
pub struct Detector {
    distances: Arc<DistanceEngine>,
    config: DetectorConfig,
}

impl Detector {
    pub fn new(distances: Arc<DistanceEngine>, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Detector { distances, config })
    }

    /// Builds fresh DC and distance engines for the scenario's grid.
    pub fn for_grid(grid: Arc<crate::grid::Grid>, config: DetectorConfig) -> Result<Self> {
        let dc = Arc::new(DcEngine::new(grid)?);
        let distances = Arc::new(DistanceEngine::new(dc, config.islanding_penalty)?);
        Self::new(distances, config)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn detect(&self, scenario: &Scenario) -> Result<ScoreSeries> {
        self.detect_frames(&scenario.topology, &scenario.sensors, &scenario.frames)
    }

    pub fn detect_frames(
        &self,
        series: &TopologySeries,
        sensors: &SensorSet,
        frames: &[SensorFrame],
    ) -> Result<ScoreSeries> {
        let cfg = &self.config;
        let grid = series.grid().clone();
        let n_ticks = series.total_ticks();
        if frames.len() != n_ticks {
            return Err(Error::validation(format!(
                "{} frames for a {n_ticks}-tick topology series",
                frames.len()
            )));
        }
        let n_sensors = sensors.len();
        for f in frames {
            if f.readings.len() != n_sensors {
                return Err(Error::validation(format!("tick {} has the wrong sensor count", f.tick)));
            }
        }

        // distances between segment pairs, keyed (history segment, current segment, sensor slot)
        let mut memo: HashMap<(usize, usize, usize), Result<f64, String>> = HashMap::new();
        let mut history: Vec<SensorHistory> = vec![SensorHistory::default(); n_sensors];
        let mut out = Vec::with_capacity(n_ticks);

        for t in 1..=n_ticks {
            let seg_now = series.segment_index(t)?;
            let topo = &series.segments()[seg_now].topology;
            let frame = &frames[t - 1];
            let mut errors: Vec<String> = Vec::new();

            let current: Vec<Option<MetricTriple>> = if t == 1 {
                vec![None; n_sensors]
            } else {
                frame
                    .readings
                    .iter()
                    .zip(&frames[t - 2].readings)
                    .map(|(now, before)| {
                        match sensor_deltas(now, Some(before), topo).and_then(|d| metrics(&d, now.bus)) {
                            Ok(m) => Some(m),
                            Err(e) => {
                                errors.push(e.to_string());
                                None
                            }
                        }
                    })
                    .collect()
            };

            // history: ticks with metrics (2..) before t, capped by the window
            let first = match cfg.window {
                Some(w) => t.saturating_sub(w).max(2),
                None => 2,
            };
            let weights = if first < t {
                self.weights(series, sensors, first..=t - 1, seg_now, &mut memo)
            } else {
                Vec::new()
            };

            let scored: Vec<(SensorScore, Option<String>)> = history
                .par_iter()
                .enumerate()
                .map(|(i, hist)| {
                    let Some(m) = &current[i] else {
                        return (SensorScore { score: 0.0, warmup: t < 2 }, None);
                    };
                    if first >= t {
                        return (SensorScore { score: 0.0, warmup: true }, None);
                    }
                    let w = match &weights[if cfg.mode == Mode::Local { i } else { 0 }] {
                        Ok(w) => w,
                        Err(e) => return (SensorScore { score: 0.0, warmup: false }, Some(e.clone())),
                    };
                    (hist.score(m, &w.w, first, cfg.iqr_floor), None)
                })
                .collect();
            errors.extend(scored.iter().filter_map(|(_, e)| e.clone()));
            errors.dedup();

            let sensor_scores: Vec<f64> = scored.iter().map(|(s, _)| s.score).collect();
            let warmup = scored.iter().all(|(s, _)| s.warmup);
            let score = sensor_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let score = if score.is_finite() { score } else { 0.0 };
            out.push(TickScore {
                tick: t,
                score,
                sensor_scores,
                warmup,
                alarm: cfg.tau.map(|tau| score > tau),
                error: (!errors.is_empty()).then(|| errors.join("; ")),
            });

            for (hist, m) in history.iter_mut().zip(&current) {
                if let Some(m) = m {
                    for (k, v) in m.as_array().into_iter().enumerate() {
                        hist.metrics[k].insert(v, t);
                    }
                }
                if let Some(w) = cfg.window {
                    let keep_from = (t + 1).saturating_sub(w);
                    for mh in &mut hist.metrics {
                        mh.drop_before(keep_from);
                    }
                }
            }
        }

        Ok(ScoreSeries {
            sensors: sensors.buses().to_vec(),
            sensor_numbers: sensors.buses().iter().map(|&b| grid.bus(b).number).collect(),
            top_k: cfg.top_k,
            ticks: out,
        })
    }

    /// One weight vector (global or uniform) or one per sensor (local).
    fn weights(
        &self,
        series: &TopologySeries,
        sensors: &SensorSet,
        ticks: std::ops::RangeInclusive<usize>,
        seg_now: usize,
        memo: &mut HashMap<(usize, usize, usize), Result<f64, String>>,
    ) -> Vec<Result<WeightVector, String>> {
        let cfg = &self.config;
        let n = ticks.end() + 1 - ticks.start();
        if cfg.weighting == Weighting::Uniform {
            return vec![WeightVector::uniform(n).map_err(|e| e.to_string())];
        }
        let slots: Vec<(usize, Option<usize>, Measure)> = match cfg.mode {
            Mode::Global => vec![(usize::MAX, None, cfg.measure)],
            Mode::Local => sensors
                .buses()
                .iter()
                .enumerate()
                .map(|(i, &b)| (i, Some(b), Measure::LodfLocal))
                .collect(),
        };
        let segments = series.segments();
        slots
            .into_iter()
            .map(|(slot, sensor, measure)| {
                let d = broadcast_segments(series, ticks.clone(), |seg| {
                    memo.entry((seg, seg_now, slot))
                        .or_insert_with(|| {
                            self.distances
                                .distance(&DistanceRequest {
                                    topo_a: &segments[seg].topology,
                                    topo_b: &segments[seg_now].topology,
                                    measure,
                                    sensor,
                                })
                                .map_err(|e| e.to_string())
                        })
                        .clone()
                        .map_err(Error::Numerical)
                })
                .map_err(|e| match e {
                    Error::Numerical(m) => m,
                    other => other.to_string(),
                })?;
                let scaled = normalize_scale(&d, cfg.scale_factor).map_err(|e| e.to_string())?;
                compute_weights(&scaled).map_err(|e| e.to_string())
            })
            .collect()
    }
}

/// Detects with engines built for the scenario's grid.
pub fn detect(scenario: &Scenario, config: &DetectorConfig) -> Result<ScoreSeries> {
    Detector::for_grid(scenario.grid.clone(), config.clone())?.detect(scenario)
}
