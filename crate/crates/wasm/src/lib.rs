//! Browser bindings for the demo page in `www/`. Every export takes plain
//! values and returns a JSON string; the bundled IEEE 14-bus case is the grid.

use std::sync::Arc;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use dynwatch::case_io::{parse_branch_list, parse_matpower, AnomalyKind, CaseFile};
use dynwatch::dc::DcEngine;
use dynwatch::detector::{Detector, DetectorConfig, Weighting};
use dynwatch::distance::{DistanceEngine, DistanceRequest, Measure, DEFAULT_ISLANDING_PENALTY};
use dynwatch::evaluation::{auc, f_measure_topk};
use dynwatch::grid::Topology;
use dynwatch::simulator::{simulate, ScenarioSpec};
use dynwatch::weighting::{compute_weights, normalize_scale};
use dynwatch::Result;

const CASE14: &str = include_str!("../../core/data/case14.m");

fn case14() -> Result<CaseFile> {
    parse_matpower(CASE14)
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

pub fn weights_json(distances: &[f64], scale: f64) -> Result<Value> {
    let scaled = normalize_scale(distances, scale)?;
    let w = compute_weights(&scaled)?;
    Ok(json!({ "scaled": scaled, "weights": w.w, "positive": w.n_positive() }))
}

pub fn distances_json(inactive_a: &str, inactive_b: &str, sensor_bus: Option<usize>) -> Result<Value> {
    let grid = case14()?.to_grid()?;
    let ta = Topology::with_inactive(grid.clone(), &parse_branch_list(inactive_a)?)?;
    let tb = Topology::with_inactive(grid.clone(), &parse_branch_list(inactive_b)?)?;
    let sensor = sensor_bus.map(|n| grid.bus_by_number(n)).transpose()?;
    let engine = DistanceEngine::new(Arc::new(DcEngine::new(grid)?), DEFAULT_ISLANDING_PENALTY)?;
    let mut out = serde_json::Map::new();
    for m in Measure::ALL {
        if m == Measure::LodfLocal && sensor.is_none() {
            continue;
        }
        let d = engine.distance(&DistanceRequest { topo_a: &ta, topo_b: &tb, measure: m, sensor })?;
        out.insert(m.as_str().into(), json!(d));
    }
    Ok(Value::Object(out))
}

pub fn detection_json(seed: u64, kind: &str, measure: &str, uniform: bool) -> Result<Value> {
    let case = case14()?;
    let spec = ScenarioSpec {
        n_topologies: 6,
        ticks_per_topology: 40,
        n_anomalies: 12,
        anomaly_kind: kind.parse::<AnomalyKind>()?,
        seed,
        ..ScenarioSpec::default()
    };
    let scenario = simulate(&spec, &case)?.scenario;
    let config = DetectorConfig {
        measure: measure.parse()?,
        weighting: if uniform { Weighting::Uniform } else { Weighting::Topology },
        ..DetectorConfig::default()
    };
    let scores = Detector::for_grid(scenario.grid.clone(), config)?.detect(&scenario)?;
    let global = scores.global();
    let labels: Vec<bool> = scenario.labels.iter().map(|l| l.is_anomaly).collect();
    let changes: Vec<usize> = scenario.topology.segments().iter().skip(1).map(|s| s.start).collect();
    Ok(json!({
        "scores": global,
        "labels": labels,
        "changes": changes,
        "auc": auc(&global, &labels)?,
        "top_k": f_measure_topk(&global, &labels, spec.n_anomalies)?,
    }))
}

/// Scales `distances` into the weighting range and returns the weights.
#[wasm_bindgen]
pub fn temporal_weights(distances: Vec<f64>, scale: f64) -> std::result::Result<String, JsError> {
    to_js(weights_json(&distances, scale))
}

/// Every measure between two topologies of the 14-bus case, given as
/// comma-separated inactive branch indices.
#[wasm_bindgen]
pub fn topology_distances(inactive_a: &str, inactive_b: &str, sensor_bus: Option<usize>) -> std::result::Result<String, JsError> {
    to_js(distances_json(inactive_a, inactive_b, sensor_bus))
}

/// Simulates a short 14-bus run and scores it.
#[wasm_bindgen]
pub fn simulate_and_detect(seed: u32, kind: &str, measure: &str, uniform: bool) -> std::result::Result<String, JsError> {
    to_js(detection_json(seed.into(), kind, measure, uniform))
}
