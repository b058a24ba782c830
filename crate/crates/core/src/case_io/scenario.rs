//! Scenario bundles: a directory holding
//!
//! * `case.m`: the grid (MATPOWER subset),
//! * `topology.csv`: `tick_start,tick_end,inactive` with the inactive branch
//!   ids comma-joined,
//! * `measurements.csv`: `tick,sensor_bus,branch_id,p_flow,q_flow`,
//! * `labels.csv`: `tick,is_anomaly,kind`,
//! * `sensors.csv`: `bus`.
//!
//! Ticks are 1-based, bus ids are case-file bus numbers, branch ids are 0-based
//! rows of `mpc.branch`, and powers are per-unit on the case `baseMVA`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::matpower::{parse_matpower, write_matpower, CaseFile};
use crate::detector::{LineFlow, SensorFrame, SensorReading};
use crate::error::{Error, Result};
use crate::grid::{adjacent_branches, Grid, Segment, SensorSet, Topology, TopologySeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    HiddenOutage,
    Fdia,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::HiddenOutage => "hidden_outage",
            AnomalyKind::Fdia => "fdia",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden_outage" | "hidden-outage" => Ok(AnomalyKind::HiddenOutage),
            "fdia" | "fdia_load_scale" => Ok(AnomalyKind::Fdia),
            other => Err(Error::input(format!("unknown anomaly kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub tick: usize,
    pub is_anomaly: bool,
    pub kind: Option<AnomalyKind>,
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub case: CaseFile,
    pub grid: Arc<Grid>,
    pub topology: TopologySeries,
    pub sensors: SensorSet,
    /// One frame per tick, `frames[t - 1].tick == t`.
    pub frames: Vec<SensorFrame>,
    /// One label per tick.
    pub labels: Vec<Label>,
}

impl Scenario {
    pub fn ticks(&self) -> usize {
        self.topology.total_ticks()
    }

    /// Checks tick alignment and that every reading sits on a branch adjacent
    /// to its sensor under the reference topology of its tick.
    pub fn validate(&self) -> Result<()> {
        let t = self.topology.total_ticks();
        if self.frames.len() != t {
            return Err(Error::validation(format!(
                "topology covers {t} ticks but measurements cover {}",
                self.frames.len()
            )));
        }
        if self.labels.len() != t {
            return Err(Error::validation(format!(
                "topology covers {t} ticks but labels cover {}",
                self.labels.len()
            )));
        }
        for (i, label) in self.labels.iter().enumerate() {
            if label.tick != i + 1 {
                return Err(Error::validation(format!(
                    "labels must list ticks 1..={t} in order; found tick {} at row {}",
                    label.tick,
                    i + 1
                )));
            }
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.tick != i + 1 {
                return Err(Error::validation(format!("frame {} carries tick {}", i + 1, frame.tick)));
            }
            if frame.readings.len() != self.sensors.len() {
                return Err(Error::validation(format!(
                    "tick {} has readings for {} sensors, expected {}",
                    frame.tick,
                    frame.readings.len(),
                    self.sensors.len()
                )));
            }
            let topo = self.topology.topology_at(frame.tick)?;
            for (reading, &bus) in frame.readings.iter().zip(self.sensors.buses()) {
                if reading.bus != bus {
                    return Err(Error::validation("readings out of sensor order"));
                }
                let adj = adjacent_branches(topo, bus)?;
                for f in &reading.flows {
                    if adj.binary_search(&f.branch).is_err() {
                        return Err(Error::validation(format!(
                            "tick {}: branch {} is not an active line adjacent to sensor bus {}",
                            frame.tick,
                            f.branch,
                            self.grid.bus(bus).number
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyRow {
    tick_start: usize,
    tick_end: usize,
    inactive: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementRow {
    tick: usize,
    sensor_bus: usize,
    branch_id: usize,
    p_flow: f64,
    q_flow: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    tick: usize,
    is_anomaly: u8,
    kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SensorRow {
    bus: usize,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let message = match e.position() {
        Some(pos) => format!("line {}: {e}", pos.line()),
        None => e.to_string(),
    };
    Error::Csv {
        path: path.to_path_buf(),
        message,
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => csv_err(path, e),
        })?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a comma-joined branch id list; empty means none.
pub fn parse_branch_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty() && *t != "-")
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::input(format!("`{t}` is not a branch id")))
        })
        .collect()
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Loads and validates a scenario bundle.
pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let case_path = dir.join("case.m");
    let text = fs::read_to_string(&case_path).map_err(|e| Error::io(&case_path, e))?;
    let case = parse_matpower(&text)?;
    let grid = case.to_grid()?;

    let path = dir.join("topology.csv");
    let mut segments = Vec::new();
    for row in read_rows::<TopologyRow>(&path)? {
        let inactive = parse_branch_list(&row.inactive).map_err(|e| Error::Csv {
            path: path.clone(),
            message: e.to_string(),
        })?;
        for &b in &inactive {
            if b >= grid.n_branches() {
                return Err(Error::validation(format!(
                    "topology.csv: unknown branch id {b} in segment starting at tick {}",
                    row.tick_start
                )));
            }
        }
        segments.push(Segment {
            start: row.tick_start,
            end: row.tick_end,
            topology: Topology::with_inactive(grid.clone(), &inactive)?,
        });
    }
    let topology = TopologySeries::new(segments)?;
    let ticks = topology.total_ticks();

    let path = dir.join("sensors.csv");
    let sensor_buses = read_rows::<SensorRow>(&path)?
        .into_iter()
        .map(|r| grid.bus_by_number(r.bus))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::validation(format!("sensors.csv: {e}")))?;
    let sensors = SensorSet::new(&grid, sensor_buses)?;
    let slot: std::collections::HashMap<usize, usize> =
        sensors.buses().iter().enumerate().map(|(i, &b)| (b, i)).collect();

    let path = dir.join("measurements.csv");
    let mut frames: Vec<SensorFrame> = (1..=ticks)
        .map(|tick| SensorFrame {
            tick,
            readings: sensors
                .buses()
                .iter()
                .map(|&bus| SensorReading {
                    bus,
                    flows: Vec::new(),
                })
                .collect(),
        })
        .collect();
    for row in read_rows::<MeasurementRow>(&path)? {
        if row.tick == 0 || row.tick > ticks {
            return Err(Error::validation(format!(
                "measurements.csv: tick {} outside the {ticks} ticks covered by topology.csv",
                row.tick
            )));
        }
        let bus = grid
            .bus_by_number(row.sensor_bus)
            .map_err(|e| Error::validation(format!("measurements.csv: {e}")))?;
        let Some(&s) = slot.get(&bus) else {
            return Err(Error::validation(format!(
                "measurements.csv: bus {} is not a sensor",
                row.sensor_bus
            )));
        };
        if row.branch_id >= grid.n_branches() {
            return Err(Error::validation(format!(
                "measurements.csv: unknown branch id {}",
                row.branch_id
            )));
        }
        frames[row.tick - 1].readings[s].flows.push(LineFlow {
            branch: row.branch_id,
            p: row.p_flow,
            q: row.q_flow,
        });
    }
    for frame in &mut frames {
        for r in &mut frame.readings {
            r.flows.sort_by_key(|f| f.branch);
            if r.flows.windows(2).any(|w| w[0].branch == w[1].branch) {
                return Err(Error::validation(format!(
                    "measurements.csv: duplicate reading at tick {} for sensor bus {}",
                    frame.tick,
                    grid.bus(r.bus).number
                )));
            }
        }
    }

    let labels = read_labels(&dir.join("labels.csv"))?;

    let scenario = Scenario {
        case,
        grid,
        topology,
        sensors,
        frames,
        labels,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Writes a scenario bundle, creating `dir` if needed.
pub fn save_scenario(dir: &Path, scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("case.m");
    fs::write(&path, write_matpower(&scenario.case, "scenario_case")).map_err(|e| Error::io(&path, e))?;

    write_rows(
        &dir.join("topology.csv"),
        scenario.topology.segments().iter().map(|s| TopologyRow {
            tick_start: s.start,
            tick_end: s.end,
            inactive: join_ids(&s.topology.inactive_branches()),
        }),
    )?;
    let grid = &scenario.grid;
    write_rows(
        &dir.join("sensors.csv"),
        scenario.sensors.buses().iter().map(|&b| SensorRow {
            bus: grid.bus(b).number,
        }),
    )?;
    write_rows(
        &dir.join("measurements.csv"),
        scenario.frames.iter().flat_map(|frame| {
            frame.readings.iter().flat_map(move |r| {
                r.flows.iter().map(move |f| MeasurementRow {
                    tick: frame.tick,
                    sensor_bus: grid.bus(r.bus).number,
                    branch_id: f.branch,
                    p_flow: f.p,
                    q_flow: f.q,
                })
            })
        }),
    )?;
    write_rows(
        &dir.join("labels.csv"),
        scenario.labels.iter().map(|l| LabelRow {
            tick: l.tick,
            is_anomaly: u8::from(l.is_anomaly),
            kind: l.kind.map_or("none", AnomalyKind::as_str).to_string(),
        }),
    )
}

/// Reads just `labels.csv`-formatted labels.
pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    read_rows::<LabelRow>(path)?
        .into_iter()
        .map(|r| {
            Ok(Label {
                tick: r.tick,
                is_anomaly: r.is_anomaly != 0,
                kind: match r.kind.as_str() {
                    "" | "none" => None,
                    k => Some(k.parse()?),
                },
            })
        })
        .collect()
}
