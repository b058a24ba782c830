//! Invariants checked over generated inputs.

use std::sync::Arc;

use proptest::prelude::*;

use dynwatch::case_io::{load_scenario, parse_matpower, save_scenario, AnomalyKind, CaseFile, Scenario};
use dynwatch::dc::DcEngine;
use dynwatch::detector::{Detector, DetectorConfig, SensorFrame};
use dynwatch::distance::{DistanceEngine, DistanceRequest, Measure, DEFAULT_ISLANDING_PENALTY};
use dynwatch::evaluation::{auc, f_measure_topk};
use dynwatch::grid::{symmetric_difference, Grid, SensorSet, Topology};
use dynwatch::simulator::{simulate, ScenarioSpec};
use dynwatch::stats::{weighted_iqr, weighted_median, weighted_quantile};
use dynwatch::weighting::{compute_weights, normalize_scale};

fn case14() -> CaseFile {
    let path = format!("{}/data/case14.m", env!("CARGO_MANIFEST_DIR"));
    parse_matpower(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn engine(grid: &Arc<Grid>) -> DistanceEngine {
    DistanceEngine::new(Arc::new(DcEngine::new(grid.clone()).unwrap()), DEFAULT_ISLANDING_PENALTY).unwrap()
}

fn topology(grid: &Arc<Grid>, off: &[usize]) -> Option<Topology> {
    let off: Vec<usize> = off.iter().map(|b| b % grid.n_branches()).collect();
    Topology::with_inactive(grid.clone(), &off).ok()
}

fn small_scenario(seed: u64) -> Scenario {
    let spec = ScenarioSpec {
        n_topologies: 4,
        ticks_per_topology: 15,
        n_anomalies: 4,
        seed,
        ..ScenarioSpec::default()
    };
    simulate(&spec, &case14()).unwrap().scenario
}

fn global_scores(s: &Scenario) -> Vec<f64> {
    scores_with_floor(s, DetectorConfig::default().iqr_floor)
}

fn scores_with_floor(s: &Scenario, iqr_floor: f64) -> Vec<f64> {
    Detector::for_grid(s.grid.clone(), DetectorConfig { iqr_floor, ..DetectorConfig::default() })
        .unwrap()
        .detect(s)
        .unwrap()
        .global()
}

/// Bisection on the threshold, independent of the sorted scan.
fn weights_by_bisection(d: &[f64]) -> Vec<f64> {
    let mass = |l: f64| d.iter().map(|x| (l - x).max(0.0)).sum::<f64>();
    let lo0 = d.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (lo0, lo0 + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    d.iter().map(|x| (0.5 * (lo + hi) - x).max(0.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_match_bisection(d in proptest::collection::vec(0.0f64..1.0, 1..60)) {
        let w = compute_weights(&d).unwrap().w;
        for (a, b) in w.iter().zip(weights_by_bisection(&d)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closer_ticks_never_weigh_less(d in proptest::collection::vec(0.0f64..0.01, 1..60)) {
        let w = compute_weights(&d).unwrap().w;
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] <= d[j] {
                    prop_assert!(w[i] >= w[j]);
                }
                if d[i] == d[j] {
                    prop_assert_eq!(w[i], w[j]);
                }
            }
        }
    }

    #[test]
    fn equal_distances_give_uniform_weights(v in 0.0f64..10.0, n in 1usize..80) {
        let w = compute_weights(&vec![v; n]).unwrap().w;
        for x in w {
            prop_assert!((x - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_distances_stay_in_range(d in proptest::collection::vec(0.0f64..100.0, 1..40), f in 1e-4f64..1.0) {
        let s = normalize_scale(&d, f).unwrap();
        let max = s.iter().copied().fold(0.0, f64::max);
        prop_assert!(s.iter().all(|x| *x >= 0.0));
        prop_assert!(max <= f * (1.0 + 1e-15));
    }

    #[test]
    fn uniform_quantiles_are_order_statistics(v in proptest::collection::vec(-5i32..5, 1..100), q in 0.01f64..1.0) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let n = v.len();
        let w = vec![1.0 / n as f64; n];
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        prop_assert_eq!(weighted_quantile(&v, &w, q).unwrap(), s[rank - 1]);
    }

    #[test]
    fn weighted_median_ignores_zero_weight_entries(v in proptest::collection::vec(-10.0f64..10.0, 2..50), junk in -1e6f64..1e6) {
        let n = v.len();
        let mut vals = v.clone();
        vals.push(junk);
        let mut w = vec![1.0 / n as f64; n];
        w.push(0.0);
        prop_assert_eq!(weighted_median(&vals, &w).unwrap(), weighted_median(&v, &w[..n]).unwrap());
        prop_assert!(weighted_iqr(&vals, &w).unwrap() >= 0.0);
    }

    #[test]
    fn auc_survives_monotone_transforms(
        scores in proptest::collection::vec(-3.0f64..3.0, 4..60),
        labels in proptest::collection::vec(any::<bool>(), 60),
    ) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc(&scores, labels).unwrap();
        let t: Vec<f64> = scores.iter().map(|s| s.exp() * 5.0 + 1.0).collect();
        prop_assert!((a - auc(&t, labels).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn flagging_everything_recalls_everything(
        scores in proptest::collection::vec(-3.0f64..3.0, 1..60),
        labels in proptest::collection::vec(any::<bool>(), 60),
    ) {
        let labels = &labels[..scores.len()];
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0);
        let r = f_measure_topk(&scores, labels, scores.len()).unwrap();
        prop_assert_eq!(r.recall, 1.0);
        prop_assert!((r.precision - pos as f64 / scores.len() as f64).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distances_are_symmetric_and_vanish_on_the_diagonal(
        a in proptest::collection::vec(0usize..20, 0..3),
        b in proptest::collection::vec(0usize..20, 0..3),
        sensor in 0usize..14,
    ) {
        let grid = case14().to_grid().unwrap();
        let (Some(ta), Some(tb)) = (topology(&grid, &a), topology(&grid, &b)) else { return Ok(()) };
        let e = engine(&grid);
        prop_assert_eq!(symmetric_difference(&ta, &tb).unwrap(), symmetric_difference(&tb, &ta).unwrap());
        for m in Measure::ALL {
            let d = |x: &Topology, y: &Topology| e.distance(&DistanceRequest { topo_a: x, topo_b: y, measure: m, sensor: Some(sensor) }).unwrap();
            prop_assert_eq!(d(&ta, &ta), 0.0);
            prop_assert_eq!(d(&ta, &tb), d(&tb, &ta));
            prop_assert!(d(&ta, &tb) >= 0.0);
            if ta != tb && m != Measure::LodfLocal {
                prop_assert!(d(&ta, &tb) > 0.0, "{} is zero between different topologies", m);
            }
        }
    }

    #[test]
    fn ged_obeys_the_triangle_inequality(
        a in proptest::collection::vec(0usize..20, 0..3),
        b in proptest::collection::vec(0usize..20, 0..3),
        c in proptest::collection::vec(0usize..20, 0..3),
    ) {
        let grid = case14().to_grid().unwrap();
        let (Some(ta), Some(tb), Some(tc)) = (topology(&grid, &a), topology(&grid, &b), topology(&grid, &c)) else { return Ok(()) };
        let e = engine(&grid);
        for m in [Measure::Ged, Measure::GedAdmittance] {
            let d = |x: &Topology, y: &Topology| e.distance(&DistanceRequest { topo_a: x, topo_b: y, measure: m, sensor: None }).unwrap();
            prop_assert!(d(&ta, &tc) <= d(&ta, &tb) + d(&tb, &tc) + 1e-12);
        }
    }

    #[test]
    fn local_distance_never_exceeds_global(
        a in proptest::collection::vec(0usize..20, 1..3),
        sensor in 0usize..14,
    ) {
        let grid = case14().to_grid().unwrap();
        let Some(ta) = topology(&grid, &a) else { return Ok(()) };
        let base = Topology::base(grid.clone()).unwrap();
        let e = engine(&grid);
        let d = |m, s| e.distance(&DistanceRequest { topo_a: &ta, topo_b: &base, measure: m, sensor: s }).unwrap();
        prop_assert!(d(Measure::LodfLocal, Some(sensor)) <= d(Measure::Lodf, None) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reordering_sensors_keeps_tick_scores(seed in 0u64..1000) {
        let s = small_scenario(seed);
        let mut order: Vec<usize> = (0..s.sensors.len()).collect();
        order.reverse();
        order.rotate_left(seed as usize % s.sensors.len());
        let buses: Vec<usize> = order.iter().map(|&i| s.sensors.buses()[i]).collect();
        let frames: Vec<SensorFrame> = s
            .frames
            .iter()
            .map(|f| SensorFrame { tick: f.tick, readings: order.iter().map(|&i| f.readings[i].clone()).collect() })
            .collect();
        let permuted = Scenario { sensors: SensorSet::new(&s.grid, buses).unwrap(), frames, ..s.clone() };
        prop_assert_eq!(global_scores(&s), global_scores(&permuted));
    }

    #[test]
    fn scaling_measurements_keeps_scores(seed in 0u64..1000, alpha in prop::sample::select(vec![0.25, 2.0, 10.0])) {
        let s = small_scenario(seed);
        let mut scaled = s.clone();
        for f in &mut scaled.frames {
            for r in &mut f.readings {
                for l in &mut r.flows {
                    l.p *= alpha;
                    l.q *= alpha;
                }
            }
        }
        // the IQR floor is in measurement units, so it scales along
        let floor = DetectorConfig::default().iqr_floor;
        for (a, b) in global_scores(&s).iter().zip(scores_with_floor(&scaled, floor * alpha)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn bundles_round_trip(seed in 0u64..1000) {
        let s = small_scenario(seed);
        let dir = tempfile::tempdir().unwrap();
        save_scenario(dir.path(), &s).unwrap();
        let back = load_scenario(dir.path()).unwrap();
        prop_assert_eq!(&back.topology, &s.topology);
        prop_assert_eq!(&back.labels, &s.labels);
        prop_assert_eq!(back.sensors.buses(), s.sensors.buses());
        prop_assert_eq!(&back.frames, &s.frames);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parser_never_panics(text in "[a-z0-9=;\\[\\]{}%.\\- \n\t]{0,300}") {
        let _ = parse_matpower(&text);
    }

    #[test]
    fn parser_survives_damaged_cases(cut in 0usize..2000, junk in "[0-9;\\]\\[ a-z]{0,8}") {
        let path = format!("{}/data/case14.m", env!("CARGO_MANIFEST_DIR"));
        let mut text = std::fs::read_to_string(path).unwrap();
        let at = cut % text.len();
        let at = (0..=at).rev().find(|&i| text.is_char_boundary(i)).unwrap();
        text.insert_str(at, &junk);
        if let Ok(case) = parse_matpower(&text) {
            let _ = case.to_grid();
        }
    }
}

#[test]
fn every_tick_score_is_the_sensor_maximum() {
    let s = small_scenario(3);
    let series = Detector::for_grid(s.grid.clone(), DetectorConfig::default()).unwrap().detect(&s).unwrap();
    for t in &series.ticks {
        let max = t.sensor_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(t.score, max);
    }
}

#[test]
fn fdia_scales_every_measured_flow() {
    let spec = ScenarioSpec {
        n_topologies: 2,
        ticks_per_topology: 20,
        n_anomalies: 3,
        anomaly_kind: AnomalyKind::Fdia,
        fdia_scale: 0.8,
        load_variation_pct: 0.0,
        noise_sigma: 0.0,
        seed: 4,
        ..ScenarioSpec::default()
    };
    let s = simulate(&spec, &case14()).unwrap().scenario;
    for l in s.labels.iter().filter(|l| l.is_anomaly) {
        let (now, before) = (&s.frames[l.tick - 1], &s.frames[l.tick - 2]);
        for (a, b) in now.readings.iter().zip(&before.readings) {
            for (x, y) in a.flows.iter().zip(&b.flows) {
                assert!((x.p - 0.8 * y.p).abs() < 1e-12, "tick {}: {} vs {}", l.tick, x.p, y.p);
            }
        }
    }
}

#[test]
fn constant_measurements_score_zero() {
    let mut s = small_scenario(5);
    let first = s.frames[0].readings.clone();
    let mut series = s.topology.clone();
    // one topology throughout so every frame can repeat the first
    let seg = series.segments()[0].clone();
    series = dynwatch::grid::TopologySeries::new(vec![dynwatch::grid::Segment { start: 1, end: s.frames.len(), ..seg }]).unwrap();
    s.topology = series;
    for f in &mut s.frames {
        f.readings = first.clone();
    }
    assert!(global_scores(&s).iter().all(|&a| a == 0.0));
}
