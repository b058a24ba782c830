//! DC power flow and the linear sensitivities built on it (PTDF, LODF).
//!
//! The reduced susceptance matrix B' (slack row and column removed) is
//! factorized once per distinct active mask. Its sparsity pattern covers
//! every branch of the grid, active or not, so the symbolic analysis and
//! fill-reducing ordering are shared by all topologies of one grid and only
//! the numeric Cholesky factor changes.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};
use crate::grid::{Grid, Topology};

/// Default `|1 - PTDF_k(k)|` below which outage `k` is treated as islanding.
pub const DEFAULT_BRIDGE_TOLERANCE: f64 = 1e-6;
/// Default number of cached factorizations.
pub const DEFAULT_CACHE_CAPACITY: usize = 64;

/// Solution of one DC power flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DcSolution {
    /// Bus voltage angles in radians, slack at zero.
    pub theta: Vec<f64>,
    /// Real power flow per branch id, from-bus to to-bus, per-unit.
    /// Inactive branches carry zero.
    pub flows: Vec<f64>,
}

/// LODF table of one topology.
///
/// `get(l, k)` is the change of flow on `l` per unit of pre-outage flow on
/// `k`. Outages that island the grid have no column.
#[derive(Debug, Clone, PartialEq)]
pub struct LodfTable {
    columns: Vec<Option<Vec<f64>>>,
    bridges: BTreeSet<usize>,
    active: Vec<bool>,
}

impl LodfTable {
    pub fn get(&self, observed: usize, outage: usize) -> Option<f64> {
        if !self.active.get(observed).copied().unwrap_or(false) {
            return None;
        }
        self.columns.get(outage)?.as_ref().map(|c| c[observed])
    }

    /// Full column for outage `k`, indexed by branch id.
    pub fn column(&self, outage: usize) -> Option<&[f64]> {
        self.columns.get(outage)?.as_deref()
    }

    pub fn is_bridge(&self, branch: usize) -> bool {
        self.bridges.contains(&branch)
    }

    pub fn bridges(&self) -> &BTreeSet<usize> {
        &self.bridges
    }

    pub fn n_branches(&self) -> usize {
        self.columns.len()
    }
}

/// One LODF column: the response of every branch to the outage of `outage`.
#[derive(Debug, Clone, PartialEq)]
pub struct LodfColumn {
    pub outage: usize,
    /// `None` when the outage islands the grid.
    pub values: Option<Vec<f64>>,
}

impl LodfColumn {
    pub fn is_bridge(&self) -> bool {
        self.values.is_none()
    }
}

/// Numeric factor of B' for one topology.
pub struct Factorization {
    symbolic: Arc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
}

struct FactorCache {
    capacity: usize,
    clock: u64,
    entries: HashMap<Vec<bool>, (Arc<Factorization>, u64)>,
}

impl FactorCache {
    fn get(&mut self, key: &[bool]) -> Option<Arc<Factorization>> {
        self.clock += 1;
        let clock = self.clock;
        self.entries.get_mut(key).map(|(f, used)| {
            *used = clock;
            f.clone()
        })
    }

    fn insert(&mut self, key: Vec<bool>, f: Arc<Factorization>) {
        if self.capacity == 0 {
            return;
        }
        self.clock += 1;
        if self.entries.len() >= self.capacity && !self.entries.contains_key(&key) {
            if let Some(oldest) = self
                .entries
                .iter()
                .min_by_key(|(_, (_, used))| *used)
                .map(|(k, _)| k.clone())
            {
                self.entries.remove(&oldest);
            }
        }
        self.entries.insert(key, (f, self.clock));
    }
}

/// DC power-flow engine for one grid.
///
/// Safe to share across threads; concurrent calls on the same topology
/// return equal results.
pub struct DcEngine {
    grid: Arc<Grid>,
    /// bus id -> row of B', `None` for the slack
    row_of: Vec<Option<usize>>,
    /// row of B' -> bus id
    bus_of: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag_slot: Vec<usize>,
    branch_slot: Vec<Option<usize>>,
    symbolic: Option<Arc<SymbolicCholesky<usize>>>,
    bridge_tolerance: f64,
    cache: Mutex<FactorCache>,
}

impl std::fmt::Debug for DcEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DcEngine")
            .field("buses", &self.grid.n_buses())
            .field("branches", &self.grid.n_branches())
            .field("bridge_tolerance", &self.bridge_tolerance)
            .finish()
    }
}

impl DcEngine {
    pub fn new(grid: Arc<Grid>) -> Result<Self> {
        Self::with_options(grid, DEFAULT_CACHE_CAPACITY, DEFAULT_BRIDGE_TOLERANCE)
    }

    pub fn with_options(grid: Arc<Grid>, cache_capacity: usize, bridge_tolerance: f64) -> Result<Self> {
        if !(bridge_tolerance >= 0.0) {
            return Err(Error::input("bridge tolerance must be non-negative"));
        }
        let n = grid.n_buses();
        let slack = grid.slack();
        let mut row_of = vec![None; n];
        let mut bus_of = Vec::with_capacity(n.saturating_sub(1));
        for (bus, slot) in row_of.iter_mut().enumerate() {
            if bus != slack {
                *slot = Some(bus_of.len());
                bus_of.push(bus);
            }
        }
        let m = bus_of.len();

        // lower-triangular pattern: column j holds j and every neighbour row > j
        let mut rows_per_col: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
        for br in grid.branches() {
            if let (Some(a), Some(b)) = (row_of[br.from_bus], row_of[br.to_bus]) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                rows_per_col[lo].push(hi);
            }
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for rows in &mut rows_per_col {
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend_from_slice(rows);
            col_ptr.push(row_idx.len());
        }
        let slot = |row: usize, col: usize| -> usize {
            let range = col_ptr[col]..col_ptr[col + 1];
            range.start + row_idx[range].binary_search(&row).expect("entry in pattern")
        };
        let diag_slot: Vec<usize> = (0..m).map(|j| slot(j, j)).collect();
        let branch_slot = grid
            .branches()
            .iter()
            .map(|br| match (row_of[br.from_bus], row_of[br.to_bus]) {
                (Some(a), Some(b)) => Some(slot(a.max(b), a.min(b))),
                _ => None,
            })
            .collect();

        let symbolic = if m == 0 {
            None
        } else {
            let pattern = SymbolicSparseColMatRef::new_checked(m, m, &col_ptr, None, &row_idx);
            // Simplicial factors: the supernodal variant faer switches to on
            // larger grids makes the single-column solves used here slower.
            let params = CholeskySymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SIMPLICIAL,
                ..Default::default()
            };
            Some(Arc::new(
                factorize_symbolic_cholesky(pattern, Side::Lower, SymmetricOrdering::Amd, params)
                    .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e:?}")))?,
            ))
        };

        Ok(DcEngine {
            grid,
            row_of,
            bus_of,
            col_ptr,
            row_idx,
            diag_slot,
            branch_slot,
            symbolic,
            bridge_tolerance,
            cache: Mutex::new(FactorCache {
                capacity: cache_capacity,
                clock: 0,
                entries: HashMap::new(),
            }),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn bridge_tolerance(&self) -> f64 {
        self.bridge_tolerance
    }

    fn check_topology(&self, topology: &Topology) -> Result<()> {
        if !(Arc::ptr_eq(topology.grid(), &self.grid) || **topology.grid() == *self.grid) {
            return Err(Error::input("topology belongs to a different grid than the engine"));
        }
        Ok(())
    }

    /// Numeric factorization of B' for `topology`, cached by active mask.
    pub fn factorize(&self, topology: &Topology) -> Result<Arc<Factorization>> {
        self.check_topology(topology)?;
        if let Some(f) = self.cache.lock().expect("cache poisoned").get(topology.mask()) {
            return Ok(f);
        }
        topology.ensure_connected()?;
        let f = Arc::new(self.factorize_uncached(topology)?);
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(topology.mask().to_vec(), f.clone());
        Ok(f)
    }

    fn factorize_uncached(&self, topology: &Topology) -> Result<Factorization> {
        let Some(symbolic) = &self.symbolic else {
            return Err(Error::Numerical("grid has no non-slack bus".into()));
        };
        let mut values = vec![0.0; self.row_idx.len()];
        for b in topology.active_branches() {
            let br = self.grid.branch(b);
            let y = br.susceptance();
            for end in [br.from_bus, br.to_bus] {
                if let Some(r) = self.row_of[end] {
                    values[self.diag_slot[r]] += y;
                }
            }
            if let Some(s) = self.branch_slot[b] {
                values[s] -= y;
            }
        }
        let m = self.bus_of.len();
        let pattern = SymbolicSparseColMatRef::new_checked(m, m, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(pattern, &values);
        let mut factor = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_llt(
                &mut factor,
                mat,
                Side::Lower,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Numerical(format!("B' is not positive definite: {e:?}")))?;
        Ok(Factorization {
            symbolic: symbolic.clone(),
            values: factor,
        })
    }

    /// Solves B'θ = rhs for several right-hand sides given per bus (the
    /// slack entry is ignored). Returns full-length angle vectors.
    fn solve_angles(&self, topology: &Topology, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let factor = self.factorize(topology)?;
        let m = self.bus_of.len();
        let k = rhs.len();
        let mut buf = vec![0.0; m * k];
        for (c, r) in rhs.iter().enumerate() {
            for (row, &bus) in self.bus_of.iter().enumerate() {
                buf[c * m + row] = r[bus];
            }
        }
        if k > 0 {
            let view = MatMut::from_column_major_slice_mut(&mut buf, m, k);
            let sym = &*factor.symbolic;
            let mut mem = MemBuffer::new(sym.solve_in_place_scratch::<f64>(k, Par::Seq));
            LltRef::new(sym, &factor.values).solve_in_place_with_conj(Conj::No, view, Par::Seq, MemStack::new(&mut mem));
        }
        let n = self.grid.n_buses();
        Ok((0..k)
            .map(|c| {
                let mut theta = vec![0.0; n];
                for (row, &bus) in self.bus_of.iter().enumerate() {
                    theta[bus] = buf[c * m + row];
                }
                theta
            })
            .collect())
    }

    fn flows_from_angles(&self, topology: &Topology, theta: &[f64]) -> Vec<f64> {
        self.grid
            .branches()
            .iter()
            .map(|br| {
                if topology.is_active(br.id) {
                    (theta[br.from_bus] - theta[br.to_bus]) / br.reactance
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// DC power flow for per-bus net injections (per-unit). The slack's
    /// entry is ignored; the slack absorbs any imbalance.
    pub fn solve_dc(&self, topology: &Topology, injections: &[f64]) -> Result<DcSolution> {
        if injections.len() != self.grid.n_buses() {
            return Err(Error::input(format!(
                "{} injections given for {} buses",
                injections.len(),
                self.grid.n_buses()
            )));
        }
        if injections.iter().any(|p| !p.is_finite()) {
            return Err(Error::input("injections must be finite"));
        }
        let theta = self.solve_angles(topology, &[injections.to_vec()])?.pop().expect("one rhs");
        let flows = self.flows_from_angles(topology, &theta);
        Ok(DcSolution { theta, flows })
    }

    /// Sensitivity of every branch flow to one per-unit transfer injected at
    /// `from_bus` and withdrawn at `to_bus`. Inactive branches get zero.
    pub fn ptdf(&self, topology: &Topology, from_bus: usize, to_bus: usize) -> Result<Vec<f64>> {
        self.grid.check_bus(from_bus)?;
        self.grid.check_bus(to_bus)?;
        Ok(self.ptdf_batch(topology, &[(from_bus, to_bus)])?.pop().expect("one transfer"))
    }

    fn ptdf_batch(&self, topology: &Topology, transfers: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
        let n = self.grid.n_buses();
        let rhs: Vec<Vec<f64>> = transfers
            .iter()
            .map(|&(f, t)| {
                let mut r = vec![0.0; n];
                r[f] += 1.0;
                r[t] -= 1.0;
                r
            })
            .collect();
        Ok(self
            .solve_angles(topology, &rhs)?
            .iter()
            .map(|theta| self.flows_from_angles(topology, theta))
            .collect())
    }

    fn lodf_from_ptdf(&self, outage: usize, mut ptdf: Vec<f64>) -> LodfColumn {
        let denom = 1.0 - ptdf[outage];
        if denom.abs() < self.bridge_tolerance {
            return LodfColumn { outage, values: None };
        }
        for v in ptdf.iter_mut() {
            *v /= denom;
        }
        ptdf[outage] = -1.0;
        LodfColumn {
            outage,
            values: Some(ptdf),
        }
    }

    /// LODF column for the outage of active branch `outage`.
    pub fn lodf_column(&self, topology: &Topology, outage: usize) -> Result<LodfColumn> {
        self.grid.check_branch(outage)?;
        if !topology.is_active(outage) {
            return Err(Error::input(format!("outage branch {outage} is not active")));
        }
        let br = self.grid.branch(outage);
        let ptdf = self.ptdf(topology, br.from_bus, br.to_bus)?;
        Ok(self.lodf_from_ptdf(outage, ptdf))
    }

    /// Full LODF table. Memory is quadratic in the branch count; use
    /// [`DcEngine::lodf_column`] on large grids.
    pub fn lodf(&self, topology: &Topology) -> Result<LodfTable> {
        self.check_topology(topology)?;
        let nb = self.grid.n_branches();
        let mut columns: Vec<Option<Vec<f64>>> = vec![None; nb];
        let mut bridges = BTreeSet::new();
        let active: Vec<usize> = topology.active_branches().collect();
        for chunk in active.chunks(64) {
            let transfers: Vec<(usize, usize)> = chunk
                .iter()
                .map(|&k| {
                    let br = self.grid.branch(k);
                    (br.from_bus, br.to_bus)
                })
                .collect();
            for (&k, ptdf) in chunk.iter().zip(self.ptdf_batch(topology, &transfers)?) {
                let col = self.lodf_from_ptdf(k, ptdf);
                match col.values {
                    Some(v) => columns[k] = Some(v),
                    None => {
                        bridges.insert(k);
                    }
                }
            }
        }
        Ok(LodfTable {
            columns,
            bridges,
            active: topology.mask().to_vec(),
        })
    }

    /// Effective reactance between two buses: the angle difference produced
    /// by a unit transfer between them.
    pub fn effective_reactance(&self, topology: &Topology, a: usize, b: usize) -> Result<f64> {
        self.grid.check_bus(a)?;
        self.grid.check_bus(b)?;
        let n = self.grid.n_buses();
        let mut r = vec![0.0; n];
        r[a] += 1.0;
        r[b] -= 1.0;
        let theta = self.solve_angles(topology, &[r])?.pop().expect("one rhs");
        Ok(theta[a] - theta[b])
    }
}
