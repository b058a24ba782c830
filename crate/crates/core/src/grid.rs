//! Grid, time-varying topology and sensor placement.
//!
//! A [`Grid`] is the master list of buses and branches. A [`Topology`] is a
//! mask over that branch list, so two topologies of the same grid always agree
//! on branch ids and set operations reduce to mask arithmetic.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Dense 0-based index.
    pub id: usize,
    /// Bus number as written in the case file.
    pub number: usize,
    pub is_slack: bool,
    /// Real power demand, per-unit.
    pub load: f64,
    /// Real power generation of in-service units, per-unit.
    pub generation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance, per-unit. Always positive.
    pub reactance: f64,
    /// |1 / (r + jx)|, per-unit.
    pub admittance_mag: f64,
    /// Status in the case file.
    pub in_service: bool,
}

impl Branch {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }

    pub fn touches(&self, bus: usize) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }

    /// The endpoint opposite to `bus`.
    pub fn other_end(&self, bus: usize) -> usize {
        if self.from_bus == bus {
            self.to_bus
        } else {
            self.from_bus
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    slack: usize,
    base_mva: f64,
    by_number: BTreeMap<usize, usize>,
    incidence: Vec<Vec<usize>>,
}

impl Grid {
    /// Builds a grid from dense buses and branches.
    ///
    /// Bus ids must equal their positions, branch ids likewise, and exactly
    /// one bus must be the slack.
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>, base_mva: f64) -> Result<Self> {
        let mut by_number = BTreeMap::new();
        for (pos, bus) in buses.iter().enumerate() {
            if bus.id != pos {
                return Err(Error::validation(format!(
                    "bus ids must be dense: position {pos} holds id {}",
                    bus.id
                )));
            }
            if by_number.insert(bus.number, pos).is_some() {
                return Err(Error::validation(format!("duplicate bus number {}", bus.number)));
            }
        }
        let slacks: Vec<usize> = buses.iter().filter(|b| b.is_slack).map(|b| b.id).collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return Err(Error::validation("grid has no slack bus")),
            _ => {
                return Err(Error::validation(format!(
                    "grid has {} slack buses, expected exactly one",
                    slacks.len()
                )))
            }
        };
        let mut incidence = vec![Vec::new(); buses.len()];
        for (pos, br) in branches.iter().enumerate() {
            if br.id != pos {
                return Err(Error::validation(format!(
                    "branch ids must be dense: position {pos} holds id {}",
                    br.id
                )));
            }
            if br.from_bus >= buses.len() || br.to_bus >= buses.len() {
                return Err(Error::validation(format!("branch {pos} references an unknown bus")));
            }
            if br.from_bus == br.to_bus {
                return Err(Error::validation(format!("branch {pos} is a self-loop")));
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(Error::validation(format!(
                    "branch {pos} has non-positive reactance {}",
                    br.reactance
                )));
            }
            incidence[br.from_bus].push(pos);
            incidence[br.to_bus].push(pos);
        }
        Ok(Grid {
            buses,
            branches,
            slack,
            base_mva,
            by_number,
            incidence,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus(&self, id: usize) -> &Bus {
        &self.buses[id]
    }

    pub fn branch(&self, id: usize) -> &Branch {
        &self.branches[id]
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Dense id of the bus with case-file number `number`.
    pub fn bus_by_number(&self, number: usize) -> Result<usize> {
        self.by_number
            .get(&number)
            .copied()
            .ok_or_else(|| Error::input(format!("unknown bus number {number}")))
    }

    /// All branches incident to `bus`, regardless of status, sorted by id.
    pub fn incident(&self, bus: usize) -> &[usize] {
        &self.incidence[bus]
    }

    /// Returns a copy with a different slack bus. Sensitivities are
    /// slack-invariant; this exists to check that.
    pub fn with_slack(&self, slack: usize) -> Result<Grid> {
        if slack >= self.buses.len() {
            return Err(Error::input(format!("unknown bus id {slack}")));
        }
        let mut g = self.clone();
        for b in &mut g.buses {
            b.is_slack = b.id == slack;
        }
        g.slack = slack;
        Ok(g)
    }

    pub fn check_bus(&self, bus: usize) -> Result<()> {
        if bus < self.buses.len() {
            Ok(())
        } else {
            Err(Error::input(format!("unknown bus id {bus}")))
        }
    }

    pub fn check_branch(&self, branch: usize) -> Result<()> {
        if branch < self.branches.len() {
            Ok(())
        } else {
            Err(Error::input(format!("unknown branch id {branch}")))
        }
    }
}

/// An active-branch mask over a grid's master branch list.
#[derive(Debug, Clone)]
pub struct Topology {
    grid: Arc<Grid>,
    active: Vec<bool>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.active == other.active
    }
}

impl Topology {
    /// A connected topology. Fails with [`Error::Islanded`] otherwise.
    pub fn new(grid: Arc<Grid>, active: Vec<bool>) -> Result<Self> {
        let t = Self::new_allow_islands(grid, active)?;
        t.ensure_connected()?;
        Ok(t)
    }

    /// A topology whose induced graph may be disconnected.
    pub fn new_allow_islands(grid: Arc<Grid>, active: Vec<bool>) -> Result<Self> {
        if active.len() != grid.n_branches() {
            return Err(Error::input(format!(
                "mask has {} entries but the grid has {} branches",
                active.len(),
                grid.n_branches()
            )));
        }
        Ok(Topology { grid, active })
    }

    /// Branch statuses as given in the case file.
    pub fn base(grid: Arc<Grid>) -> Result<Self> {
        let active = grid.branches().iter().map(|b| b.in_service).collect();
        Self::new(grid, active)
    }

    /// Every branch active except `inactive`, whatever the case-file status.
    pub fn with_inactive(grid: Arc<Grid>, inactive: &[usize]) -> Result<Self> {
        let mut active: Vec<bool> = vec![true; grid.n_branches()];
        for &b in inactive {
            grid.check_branch(b)?;
            active[b] = false;
        }
        Self::new(grid, active)
    }

    /// This topology minus `branches`; must stay connected.
    pub fn without(&self, branches: &[usize]) -> Result<Self> {
        let mut active = self.active.clone();
        for &b in branches {
            self.grid.check_branch(b)?;
            active[b] = false;
        }
        Self::new(self.grid.clone(), active)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, branch: usize) -> bool {
        self.active[branch]
    }

    pub fn active_branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn inactive_branches(&self) -> Vec<usize> {
        self.active.iter().enumerate().filter(|(_, &a)| !a).map(|(i, _)| i).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn same_grid(&self, other: &Topology) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn ensure_same_grid(&self, other: &Topology) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::input("topologies reference different grids"))
        }
    }

    /// Connected components over active branches, each sorted, ordered by
    /// smallest bus id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.grid.n_buses();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for b in self.active_branches() {
            let br = self.grid.branch(b);
            let (ra, rb) = (find(&mut parent, br.from_bus), find(&mut parent, br.to_bus));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    pub fn ensure_connected(&self) -> Result<()> {
        let components = self.components();
        if components.len() > 1 {
            Err(Error::Islanded { components })
        } else {
            Ok(())
        }
    }

    /// Active branches whose removal would split their component.
    ///
    /// Parallel branches are never bridges.
    pub fn bridges(&self) -> Vec<usize> {
        let n = self.grid.n_buses();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut bridges = Vec::new();
        let mut timer = 0usize;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, branch used to enter it, next incidence position)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, via, ref mut pos)) = stack.last_mut() {
                let inc = self.grid.incident(v);
                if *pos < inc.len() {
                    let e = inc[*pos];
                    *pos += 1;
                    if !self.active[e] || e == via {
                        continue;
                    }
                    let w = self.grid.branch(e).other_end(v);
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, e, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(parent, _, _)) = stack.last() {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            bridges.push(via);
                        }
                    }
                }
            }
        }
        bridges.sort_unstable();
        bridges
    }
}

/// Active branches incident to `bus`, sorted by id.
pub fn adjacent_branches(topology: &Topology, bus: usize) -> Result<Vec<usize>> {
    topology.grid.check_bus(bus)?;
    Ok(topology
        .grid
        .incident(bus)
        .iter()
        .copied()
        .filter(|&b| topology.active[b])
        .collect())
}

/// Branches active in exactly one of the two topologies, sorted by id.
pub fn symmetric_difference(a: &Topology, b: &Topology) -> Result<Vec<usize>> {
    a.ensure_same_grid(b)?;
    Ok(a.active
        .iter()
        .zip(&b.active)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect())
}

/// One constant-topology stretch of ticks, `start..=end` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub topology: Topology,
}

/// Reference topologies over ticks `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySeries {
    segments: Vec<Segment>,
}

impl TopologySeries {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::validation("topology series is empty"));
        }
        let mut next = 1;
        for (i, s) in segments.iter().enumerate() {
            if s.start != next || s.end < s.start {
                return Err(Error::validation(format!(
                    "topology segment {i} covers ticks {}..={} but tick {next} was expected next",
                    s.start, s.end
                )));
            }
            if !s.topology.same_grid(&segments[0].topology) {
                return Err(Error::validation("topology segments reference different grids"));
            }
            next = s.end + 1;
        }
        Ok(TopologySeries { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_ticks(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.segments[0].topology.grid()
    }

    /// Index of the segment containing `tick`.
    pub fn segment_index(&self, tick: usize) -> Result<usize> {
        if tick == 0 || tick > self.total_ticks() {
            return Err(Error::input(format!(
                "tick {tick} outside 1..={}",
                self.total_ticks()
            )));
        }
        Ok(self.segments.partition_point(|s| s.end < tick))
    }

    pub fn topology_at(&self, tick: usize) -> Result<&Topology> {
        Ok(&self.segments[self.segment_index(tick)?].topology)
    }

    /// True when `tick` starts a segment other than the first.
    pub fn is_change_tick(&self, tick: usize) -> bool {
        self.segments.iter().skip(1).any(|s| s.start == tick)
    }
}

/// The fixed set of sensor buses.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    buses: Vec<usize>,
}

impl SensorSet {
    pub fn new(grid: &Grid, buses: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &b in &buses {
            grid.check_bus(b)?;
            if !seen.insert(b) {
                return Err(Error::validation(format!(
                    "sensor bus {} listed twice",
                    grid.bus(b).number
                )));
            }
        }
        if buses.is_empty() {
            return Err(Error::validation("sensor set is empty"));
        }
        Ok(SensorSet { buses })
    }

    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Adjacent active branches of every sensor under `topology`.
    pub fn adjacency(&self, topology: &Topology) -> Result<Vec<Vec<usize>>> {
        self.buses.iter().map(|&b| adjacent_branches(topology, b)).collect()
    }
}
