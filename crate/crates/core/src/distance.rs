//! Distances between two topologies of the same grid.
//!
//! Every measure is a sum over the changed branches (the symmetric difference
//! of the two masks). The sensitivity-based measures evaluate each changed
//! branch on the transition graph, the union of both topologies.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::dc::DcEngine;
use crate::error::{Error, Result};
use crate::grid::{adjacent_branches, symmetric_difference, Topology};

/// Contribution of a changed branch whose outage islands the transition graph.
pub const DEFAULT_ISLANDING_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// Sum of average |LODF| impacts of the changed branches.
    Lodf,
    /// [`Measure::Lodf`] filtered by the impact on one sensor's lines.
    LodfLocal,
    /// Number of changed branches.
    Ged,
    /// Sum of series admittance magnitudes of the changed branches.
    GedAdmittance,
    /// Sum of equivalent conductances between the changed branches' endpoints.
    EqConductance,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Lodf,
        Measure::LodfLocal,
        Measure::Ged,
        Measure::GedAdmittance,
        Measure::EqConductance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Lodf => "lodf",
            Measure::LodfLocal => "lodf-local",
            Measure::Ged => "ged",
            Measure::GedAdmittance => "ged-admittance",
            Measure::EqConductance => "eq-conductance",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::input(format!("unknown distance measure `{s}`")))
    }
}

/// A distance query. `sensor` is required for [`Measure::LodfLocal`].
#[derive(Debug, Clone)]
pub struct DistanceRequest<'a> {
    pub topo_a: &'a Topology,
    pub topo_b: &'a Topology,
    pub measure: Measure,
    pub sensor: Option<usize>,
}

/// Union of the two active masks.
pub fn transition_graph(a: &Topology, b: &Topology) -> Result<Topology> {
    a.ensure_same_grid(b)?;
    let mask = a.mask().iter().zip(b.mask()).map(|(x, y)| *x || *y).collect();
    Topology::new_allow_islands(a.grid().clone(), mask)
}

/// Sensitivity data of one transition graph, restricted to the changed branches.
#[derive(Debug)]
pub struct Transition {
    pub graph: Topology,
    pub changed: Vec<usize>,
    /// `x_p` per entry of `changed`.
    pub contribution: Vec<f64>,
    /// Whether each changed branch is a bridge of the transition graph.
    pub bridge: Vec<bool>,
    /// LODF column per changed branch, kept only for local queries; an
    /// entry is `None` for bridges.
    columns: Option<Vec<Option<Arc<Vec<f64>>>>>,
}

impl Transition {
    /// Sum of the changed branches' contributions.
    pub fn lodf_distance(&self) -> f64 {
        self.contribution.iter().sum()
    }

    /// Weighting coefficient of changed branch `changed[idx]` for a sensor
    /// whose adjacent lines in the transition graph are `adjacent`.
    ///
    /// A changed branch touching the sensor, or one whose outage islands the
    /// transition graph, is maximally relevant and gets 1.
    pub fn local_coefficient(&self, idx: usize, adjacent: &[usize]) -> f64 {
        let p = self.changed[idx];
        if adjacent.binary_search(&p).is_ok() || self.bridge[idx] {
            return 1.0;
        }
        let col = self.columns.as_ref().expect("transition built with columns")[idx]
            .as_ref()
            .expect("non-bridge column");
        adjacent.iter().map(|&l| col[l].abs()).fold(0.0, f64::max)
    }

    /// Locally sensitive distance for the sensor at `bus`.
    pub fn local_distance(&self, bus: usize) -> Result<f64> {
        let adjacent = adjacent_branches(&self.graph, bus)?;
        if adjacent.is_empty() {
            return Err(Error::SensorBlind { bus });
        }
        Ok((0..self.changed.len())
            .map(|i| self.contribution[i] * self.local_coefficient(i, &adjacent))
            .sum())
    }
}

type PairKey = (Vec<usize>, Vec<usize>);

/// Distance evaluator for one grid; caches transition-graph sensitivities per
/// topology pair.
#[derive(Clone)]
struct EdgeEntry {
    contribution: f64,
    bridge: bool,
    column: Option<Arc<Vec<f64>>>,
}

pub struct DistanceEngine {
    dc: Arc<DcEngine>,
    islanding_penalty: f64,
    cache: Mutex<HashMap<PairKey, Arc<Transition>>>,
    // (transition graph's inactive branches, changed branch) -> contribution.
    // Pairs of topologies often share one transition graph.
    edges: Mutex<HashMap<(Vec<usize>, usize), EdgeEntry>>,
}

impl fmt::Debug for DistanceEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistanceEngine")
            .field("islanding_penalty", &self.islanding_penalty)
            .finish()
    }
}

impl DistanceEngine {
    pub fn new(dc: Arc<DcEngine>, islanding_penalty: f64) -> Result<Self> {
        if !(islanding_penalty >= 0.0 && islanding_penalty.is_finite()) {
            return Err(Error::input("islanding penalty must be finite and non-negative"));
        }
        Ok(DistanceEngine {
            dc,
            islanding_penalty,
            cache: Mutex::new(HashMap::new()),
            edges: Mutex::new(HashMap::new()),
        })
    }

    pub fn dc(&self) -> &Arc<DcEngine> {
        &self.dc
    }

    pub fn islanding_penalty(&self) -> f64 {
        self.islanding_penalty
    }

    /// Average absolute LODF impact of removing `p` from `trans`.
    pub fn edge_contribution(&self, trans: &Topology, p: usize) -> Result<f64> {
        let (x, _) = self.contribution_and_column(trans, p)?;
        Ok(x)
    }

    fn contribution_and_column(&self, trans: &Topology, p: usize) -> Result<(f64, Option<Vec<f64>>)> {
        trans.grid().check_branch(p)?;
        if !trans.is_active(p) {
            return Err(Error::input(format!("branch {p} is not active in the transition graph")));
        }
        let col = self.dc.lodf_column(trans, p)?;
        match col.values {
            None => Ok((self.islanding_penalty, None)),
            Some(values) => {
                let total: f64 = trans
                    .active_branches()
                    .filter(|&l| l != p)
                    .map(|l| values[l].abs())
                    .sum();
                Ok((total / trans.n_active() as f64, Some(values)))
            }
        }
    }

    fn edge_entry(&self, graph: &Topology, graph_key: &[usize], p: usize, with_column: bool) -> Result<EdgeEntry> {
        let key = (graph_key.to_vec(), p);
        if let Some(e) = self.edges.lock().expect("cache poisoned").get(&key) {
            if e.bridge || e.column.is_some() || !with_column {
                return Ok(e.clone());
            }
        }
        let (x, col) = self.contribution_and_column(graph, p)?;
        let e = EdgeEntry {
            contribution: x,
            bridge: col.is_none(),
            column: if with_column { col.map(Arc::new) } else { None },
        };
        self.edges.lock().expect("cache poisoned").insert(key, e.clone());
        Ok(e)
    }

    /// Transition-graph sensitivities of a topology pair (cached, symmetric).
    /// Full LODF columns are retained only when `with_columns` is set.
    pub fn transition(&self, a: &Topology, b: &Topology, with_columns: bool) -> Result<Arc<Transition>> {
        a.ensure_same_grid(b)?;
        let (ka, kb) = (a.inactive_branches(), b.inactive_branches());
        let key = if ka <= kb { (ka, kb) } else { (kb, ka) };
        if let Some(t) = self.cache.lock().expect("cache poisoned").get(&key) {
            if t.columns.is_some() || !with_columns {
                return Ok(t.clone());
            }
        }
        let graph = transition_graph(a, b)?;
        let changed = symmetric_difference(a, b)?;
        let mut contribution = Vec::with_capacity(changed.len());
        let mut bridge = Vec::with_capacity(changed.len());
        let mut columns = Vec::with_capacity(changed.len());
        let graph_key = graph.inactive_branches();
        for &p in &changed {
            let e = self.edge_entry(&graph, &graph_key, p, with_columns)?;
            contribution.push(e.contribution);
            bridge.push(e.bridge);
            if with_columns {
                columns.push(e.column);
            }
        }
        let t = Arc::new(Transition {
            graph,
            changed,
            contribution,
            bridge,
            columns: with_columns.then_some(columns),
        });
        self.cache.lock().expect("cache poisoned").insert(key, t.clone());
        Ok(t)
    }

    pub fn distance(&self, req: &DistanceRequest<'_>) -> Result<f64> {
        let (a, b) = (req.topo_a, req.topo_b);
        a.ensure_same_grid(b)?;
        let grid = a.grid();
        match req.measure {
            Measure::Ged => Ok(symmetric_difference(a, b)?.len() as f64),
            Measure::GedAdmittance => Ok(symmetric_difference(a, b)?
                .iter()
                .map(|&p| grid.branch(p).admittance_mag)
                .sum()),
            Measure::Lodf => {
                if a == b {
                    return Ok(0.0);
                }
                Ok(self.transition(a, b, false)?.lodf_distance())
            }
            Measure::LodfLocal => {
                let bus = req
                    .sensor
                    .ok_or_else(|| Error::input("the lodf-local measure needs a sensor bus"))?;
                grid.check_bus(bus)?;
                if a == b {
                    let trans = transition_graph(a, b)?;
                    if adjacent_branches(&trans, bus)?.is_empty() {
                        return Err(Error::SensorBlind { bus });
                    }
                    return Ok(0.0);
                }
                self.transition(a, b, true)?.local_distance(bus)
            }
            Measure::EqConductance => {
                let changed = symmetric_difference(a, b)?;
                if changed.is_empty() {
                    return Ok(0.0);
                }
                let trans = transition_graph(a, b)?;
                let comps = trans.components();
                let mut comp_of = vec![0; grid.n_buses()];
                for (c, buses) in comps.iter().enumerate() {
                    for &bus in buses {
                        comp_of[bus] = c;
                    }
                }
                let mut total = 0.0;
                for p in changed {
                    let br = grid.branch(p);
                    // an islanded transition graph cannot be solved, so every
                    // changed branch falls back to the penalty there
                    if comp_of[br.from_bus] != comp_of[br.to_bus] || comps.len() > 1 {
                        total += self.islanding_penalty;
                        continue;
                    }
                    let r = self.dc.effective_reactance(&trans, br.from_bus, br.to_bus)?;
                    total += 1.0 / r;
                }
                Ok(total)
            }
        }
    }
}
