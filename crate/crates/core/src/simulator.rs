//! Synthetic scenarios: a schedule of single-branch topology changes, slowly
//! varying loads, DC-flow measurements with noise, and injected anomalies.
//!
//! All randomness comes from one seed. The schedule, sensor placement and
//! anomaly placement are drawn sequentially from stream 0; each tick draws
//! its load and measurement noise from its own stream, so ticks can be
//! generated in parallel without changing the output.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::case_io::{AnomalyKind, CaseFile, Label, Scenario};
use crate::dc::DcEngine;
use crate::detector::{LineFlow, SensorFrame, SensorReading};
use crate::error::{Error, Result};
use crate::grid::{adjacent_branches, Grid, Segment, SensorSet, Topology, TopologySeries};

/// First tick at which an anomaly may be placed; earlier ticks are warm-up
/// for the detector.
pub const FIRST_ANOMALY_TICK: usize = 4;
/// Default sensor count cap.
pub const DEFAULT_MAX_SENSORS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_topologies: usize,
    pub ticks_per_topology: usize,
    pub n_anomalies: usize,
    pub anomaly_kind: AnomalyKind,
    /// Load multiplier during a false-data attack.
    pub fdia_scale: f64,
    /// Daily load swing, percent of base.
    pub load_variation_pct: f64,
    /// Relative load noise and absolute measurement noise (per-unit).
    pub noise_sigma: f64,
    pub seed: u64,
    /// Sensor count; `None` means `min(buses, 40)`.
    pub n_sensors: Option<usize>,
    /// Explicit sensor buses (dense ids); overrides `n_sensors`.
    pub sensor_buses: Option<Vec<usize>>,
    /// Duration of each anomaly in ticks.
    pub anomaly_ticks: usize,
    /// Period of the daily load profile in ticks; `None` spans the run.
    pub day_ticks: Option<usize>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_topologies: 20,
            ticks_per_topology: 60,
            n_anomalies: 50,
            anomaly_kind: AnomalyKind::HiddenOutage,
            fdia_scale: 0.8,
            load_variation_pct: 8.0,
            noise_sigma: 0.002,
            seed: 0,
            n_sensors: None,
            sensor_buses: None,
            anomaly_ticks: 1,
            day_ticks: None,
        }
    }
}

impl ScenarioSpec {
    pub fn total_ticks(&self) -> usize {
        self.n_topologies * self.ticks_per_topology
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_topologies == 0 || self.ticks_per_topology == 0 {
            return Err(Error::input("need at least one topology and one tick per topology"));
        }
        if self.n_anomalies >= self.total_ticks() {
            return Err(Error::input(format!(
                "{} anomalies do not fit in {} ticks",
                self.n_anomalies,
                self.total_ticks()
            )));
        }
        if !(self.fdia_scale > 0.0 && self.fdia_scale < 1.0) {
            return Err(Error::input("fdia scale must lie strictly between 0 and 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::input("noise sigma must be finite and non-negative"));
        }
        if !(0.0..100.0).contains(&self.load_variation_pct) {
            return Err(Error::input("load variation must lie in [0, 100) percent"));
        }
        if self.anomaly_ticks == 0 {
            return Err(Error::input("anomaly duration must be at least one tick"));
        }
        if self.day_ticks == Some(0) {
            return Err(Error::input("day length must be at least one tick"));
        }
        Ok(())
    }
}

fn tick_rng(seed: u64, tick: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tick as u64);
    rng
}

/// `n_topologies` segments, each the base topology minus one random
/// non-bridge branch; consecutive segments never repeat the same branch.
pub fn build_topology_schedule(spec: &ScenarioSpec, grid: &Arc<Grid>, rng: &mut impl Rng) -> Result<TopologySeries> {
    let base = Topology::base(grid.clone())?;
    let bridges = base.bridges();
    let candidates: Vec<usize> = base
        .active_branches()
        .filter(|b| bridges.binary_search(b).is_err())
        .collect();
    if candidates.is_empty() {
        return Err(Error::validation("the grid has no branch whose removal keeps it connected"));
    }
    let mut segments = Vec::with_capacity(spec.n_topologies);
    let mut last = None;
    for i in 0..spec.n_topologies {
        let mut pick = candidates[rng.random_range(0..candidates.len())];
        while candidates.len() > 1 && Some(pick) == last {
            pick = candidates[rng.random_range(0..candidates.len())];
        }
        last = Some(pick);
        segments.push(Segment {
            start: i * spec.ticks_per_topology + 1,
            end: (i + 1) * spec.ticks_per_topology,
            topology: base.without(&[pick])?,
        });
    }
    TopologySeries::new(segments)
}

/// Load multiplier of the smooth daily profile at `tick`.
fn daily_factor(spec: &ScenarioSpec, tick: usize) -> f64 {
    let period = spec.day_ticks.unwrap_or(spec.total_ticks()).max(1) as f64;
    let amp = spec.load_variation_pct / 100.0;
    1.0 + amp * (2.0 * PI * (tick - 1) as f64 / period).sin()
}

/// Per-bus load multipliers at `tick`: the daily profile times relative
/// noise, kept within the configured swing.
pub fn load_factors(spec: &ScenarioSpec, n_buses: usize, tick: usize, rng: &mut impl Rng) -> Vec<f64> {
    let daily = daily_factor(spec, tick);
    let pct = spec.load_variation_pct / 100.0;
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("valid sigma"));
    (0..n_buses)
        .map(|_| {
            let eps = noise.as_ref().map_or(0.0, |n| n.sample(rng));
            (daily * (1.0 + eps)).clamp(1.0 - pct, 1.0 + pct)
        })
        .collect()
}

/// Per-bus net injections (per-unit) at `tick`. Generation is scaled to the
/// total load; `load_scale` multiplies every load after the profile.
pub fn synth_loads(spec: &ScenarioSpec, grid: &Grid, tick: usize, load_scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let factors = load_factors(spec, grid.n_buses(), tick, rng);
    let loads: Vec<f64> = grid
        .buses()
        .iter()
        .zip(&factors)
        .map(|(b, f)| b.load * f * load_scale)
        .collect();
    let total_load: f64 = loads.iter().sum();
    let total_gen: f64 = grid.buses().iter().map(|b| b.generation).sum();
    let gen_scale = if total_gen.abs() > 0.0 { total_load / total_gen } else { 0.0 };
    grid.buses()
        .iter()
        .zip(&loads)
        .map(|(b, l)| b.generation * gen_scale - l)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEvent {
    pub tick: usize,
    pub kind: AnomalyKind,
    /// Branch hidden from the reference topology, for hidden outages.
    pub outage: Option<usize>,
}

/// Anomaly runs: not in the warm-up, not on or across a segment boundary, and
/// separated by at least one normal tick.
fn place_anomalies(spec: &ScenarioSpec, series: &TopologySeries, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let d = spec.anomaly_ticks;
    let total = series.total_ticks();
    let mut starts: Vec<usize> = (FIRST_ANOMALY_TICK..=total)
        .filter(|&t| {
            let end = t + d - 1;
            end <= total
                && !series.is_change_tick(t)
                && series.segment_index(t).ok() == series.segment_index(end).ok()
        })
        .collect();
    starts.shuffle(rng);
    let mut taken = vec![false; total + 2];
    let mut chosen = Vec::with_capacity(spec.n_anomalies);
    for t in starts {
        if chosen.len() == spec.n_anomalies {
            break;
        }
        if (t - 1..=t + d).any(|x| taken[x]) {
            continue;
        }
        for x in t..t + d {
            taken[x] = true;
        }
        chosen.push(t);
    }
    if chosen.len() < spec.n_anomalies {
        return Err(Error::input(format!(
            "only {} of {} anomalies could be placed",
            chosen.len(),
            spec.n_anomalies
        )));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Sensor buses: explicit, or a seeded random subset.
fn choose_sensors(spec: &ScenarioSpec, grid: &Grid, rng: &mut impl Rng) -> Result<SensorSet> {
    if let Some(buses) = &spec.sensor_buses {
        return SensorSet::new(grid, buses.clone());
    }
    let n = spec.n_sensors.unwrap_or(DEFAULT_MAX_SENSORS.min(grid.n_buses()));
    if n == 0 || n > grid.n_buses() {
        return Err(Error::input(format!("cannot place {n} sensors on {} buses", grid.n_buses())));
    }
    let mut buses = index::sample(rng, grid.n_buses(), n).into_vec();
    buses.sort_unstable();
    SensorSet::new(grid, buses)
}

/// Measurements and labels for every tick of `schedule`.
pub fn generate_measurements(
    spec: &ScenarioSpec,
    engine: &DcEngine,
    schedule: &TopologySeries,
    sensors: &SensorSet,
    events: &[AnomalyEvent],
) -> Result<(Vec<SensorFrame>, Vec<Label>)> {
    let grid = engine.grid().clone();
    let total = schedule.total_ticks();
    let mut event_at: Vec<Option<&AnomalyEvent>> = vec![None; total + 1];
    for e in events {
        event_at[e.tick] = Some(e);
    }
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("valid sigma"));

    let frames = (1..=total)
        .into_par_iter()
        .map(|tick| -> Result<SensorFrame> {
            let mut rng = tick_rng(spec.seed, tick);
            let reference = schedule.topology_at(tick)?;
            let event = event_at[tick];
            let load_scale = match event {
                Some(AnomalyEvent { kind: AnomalyKind::Fdia, .. }) => spec.fdia_scale,
                _ => 1.0,
            };
            let injections = synth_loads(spec, &grid, tick, load_scale, &mut rng);
            let truth = match event.and_then(|e| e.outage) {
                Some(b) => reference.without(&[b])?,
                None => reference.clone(),
            };
            let flows = engine.solve_dc(&truth, &injections)?.flows;
            let readings = sensors
                .buses()
                .iter()
                .map(|&bus| {
                    let flows = adjacent_branches(reference, bus)?
                        .into_iter()
                        .map(|l| {
                            let br = grid.branch(l);
                            let f = if br.from_bus == bus { flows[l] } else { -flows[l] };
                            let e = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                            LineFlow { branch: l, p: f + e, q: 0.0 }
                        })
                        .collect();
                    Ok(SensorReading { bus, flows })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SensorFrame { tick, readings })
        })
        .collect::<Result<Vec<_>>>()?;

    let labels = (1..=total)
        .map(|tick| Label {
            tick,
            is_anomaly: event_at[tick].is_some(),
            kind: event_at[tick].map(|e| e.kind),
        })
        .collect();
    Ok((frames, labels))
}

/// A complete scenario plus the anomaly events behind its labels.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scenario: Scenario,
    pub events: Vec<AnomalyEvent>,
}

pub fn simulate(spec: &ScenarioSpec, case: &CaseFile) -> Result<Simulation> {
    let grid = case.to_grid()?;
    let engine = DcEngine::new(grid.clone())?;
    simulate_with(spec, case, &engine)
}

/// As [`simulate`], reusing an engine built for `case`'s grid.
pub fn simulate_with(spec: &ScenarioSpec, case: &CaseFile, engine: &DcEngine) -> Result<Simulation> {
    spec.validate()?;
    let grid = engine.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schedule = build_topology_schedule(spec, &grid, &mut rng)?;
    let sensors = choose_sensors(spec, &grid, &mut rng)?;
    let starts = place_anomalies(spec, &schedule, &mut rng)?;

    let mut events = Vec::new();
    for start in starts {
        let outage = match spec.anomaly_kind {
            AnomalyKind::Fdia => None,
            AnomalyKind::HiddenOutage => {
                let reference = schedule.topology_at(start)?;
                let bridges = reference.bridges();
                let candidates: Vec<usize> = reference
                    .active_branches()
                    .filter(|b| bridges.binary_search(b).is_err())
                    .collect();
                if candidates.is_empty() {
                    return Err(Error::validation("no branch can be hidden without islanding the grid"));
                }
                Some(candidates[rng.random_range(0..candidates.len())])
            }
        };
        for tick in start..start + spec.anomaly_ticks {
            events.push(AnomalyEvent {
                tick,
                kind: spec.anomaly_kind,
                outage,
            });
        }
    }

    let (frames, labels) = generate_measurements(spec, engine, &schedule, &sensors, &events)?;
    let scenario = Scenario {
        case: case.clone(),
        grid,
        topology: schedule,
        sensors,
        frames,
        labels,
    };
    scenario.validate()?;
    Ok(Simulation { scenario, events })
}

/// `k` copies of `case`, each bus joined to its counterpart in the previous
/// copy by a branch with the median reactance. Only the first copy keeps
/// its slack. Bus numbers of copy `c` are offset by `c` times a power of ten
/// above the largest number.
pub fn duplicate_case(case: &CaseFile, k: usize) -> Result<CaseFile> {
    use crate::case_io::{BranchRecord, BUS_PV, BUS_REF};
    if k == 0 {
        return Err(Error::input("duplication factor must be at least 1"));
    }
    let max_number = case.buses.iter().map(|b| b.number).max().unwrap_or(0);
    let offset = 10usize.pow((max_number + 1).to_string().len() as u32);
    let mut xs: Vec<f64> = case.branches.iter().map(|b| b.x).collect();
    xs.sort_by(f64::total_cmp);
    let median_x = xs.get(xs.len() / 2).copied().unwrap_or(0.1);

    let mut out = CaseFile {
        base_mva: case.base_mva,
        buses: Vec::new(),
        gens: Vec::new(),
        branches: Vec::new(),
    };
    for c in 0..k {
        let shift = c * offset;
        for b in &case.buses {
            let mut nb = b.clone();
            nb.number += shift;
            if c > 0 && nb.kind == BUS_REF {
                nb.kind = BUS_PV;
            }
            out.buses.push(nb);
        }
        for g in &case.gens {
            let mut ng = g.clone();
            ng.bus += shift;
            out.gens.push(ng);
        }
        for br in &case.branches {
            let mut nbr = br.clone();
            nbr.from += shift;
            nbr.to += shift;
            out.branches.push(nbr);
        }
        if c > 0 {
            for b in &case.buses {
                out.branches.push(BranchRecord {
                    from: b.number + shift - offset,
                    to: b.number + shift,
                    r: 0.0,
                    x: median_x,
                    b: 0.0,
                    in_service: true,
                });
            }
        }
    }
    out.validate()?;
    Ok(out)
}
