//! DC engine against a dense nalgebra solve and basic circuit laws.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dynwatch::case_io::parse_matpower;
use dynwatch::dc::DcEngine;
use dynwatch::grid::{Grid, Topology};

fn case(name: &str) -> Arc<Grid> {
    let path = format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_matpower(&std::fs::read_to_string(path).unwrap())
        .unwrap()
        .to_grid()
        .unwrap()
}

fn injections(grid: &Grid) -> Vec<f64> {
    grid.buses().iter().map(|b| b.generation - b.load).collect()
}

/// Angles from a dense solve of the reduced susceptance matrix.
fn dense_angles(grid: &Grid, topo: &Topology, p: &[f64]) -> Vec<f64> {
    let n = grid.n_buses();
    let s = grid.slack();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for br in grid.branches().iter().filter(|br| topo.is_active(br.id)) {
        let y = 1.0 / br.reactance;
        b[(br.from_bus, br.from_bus)] += y;
        b[(br.to_bus, br.to_bus)] += y;
        b[(br.from_bus, br.to_bus)] -= y;
        b[(br.to_bus, br.from_bus)] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != s).collect();
    let red = DMatrix::from_fn(keep.len(), keep.len(), |i, j| b[(keep[i], keep[j])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| p[i]));
    let x = red.lu().solve(&rhs).unwrap();
    let mut theta = vec![0.0; n];
    for (i, &bus) in keep.iter().enumerate() {
        theta[bus] = x[i];
    }
    theta
}

#[test]
fn case14_matches_dense_solve() {
    let grid = case("case14.m");
    let topo = Topology::base(grid.clone()).unwrap();
    let p = injections(&grid);
    let sol = DcEngine::new(grid.clone()).unwrap().solve_dc(&topo, &p).unwrap();
    let theta = dense_angles(&grid, &topo, &p);
    for (a, b) in sol.theta.iter().zip(&theta) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    for br in grid.branches() {
        let f = (theta[br.from_bus] - theta[br.to_bus]) / br.reactance;
        assert!((sol.flows[br.id] - f).abs() < 1e-10);
    }
}

#[test]
fn flows_conserve_power_at_every_bus() {
    let grid = case("case14.m");
    let topo = Topology::base(grid.clone()).unwrap().without(&[6]).unwrap();
    let p = injections(&grid);
    let sol = DcEngine::new(grid.clone()).unwrap().solve_dc(&topo, &p).unwrap();
    let mut net = vec![0.0; grid.n_buses()];
    for br in grid.branches().iter().filter(|b| topo.is_active(b.id)) {
        net[br.from_bus] += sol.flows[br.id];
        net[br.to_bus] -= sol.flows[br.id];
    }
    let imbalance: f64 = p.iter().sum();
    for (bus, (out, inj)) in net.iter().zip(&p).enumerate() {
        let expected = if bus == grid.slack() { inj - imbalance } else { *inj };
        assert!((out - expected).abs() < 1e-9, "bus {bus}: {out} vs {expected}");
    }
}

#[test]
fn voltage_drops_sum_to_zero_around_cycles() {
    let grid = case("case14.m");
    let topo = Topology::base(grid.clone()).unwrap();
    let sol = DcEngine::new(grid.clone()).unwrap().solve_dc(&topo, &injections(&grid)).unwrap();
    // spanning tree by BFS; every other branch closes one cycle
    let n = grid.n_buses();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut tree = vec![false; grid.n_branches()];
    let mut queue = std::collections::VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &e in grid.incident(u) {
            let v = grid.branch(e).other_end(u);
            if !seen[v] {
                seen[v] = true;
                tree[e] = true;
                parent[v] = Some((u, e));
                queue.push_back(v);
            }
        }
    }
    // drop from bus to root along the tree
    let drop_to_root = |mut v: usize| {
        let mut acc = 0.0;
        while let Some((u, e)) = parent[v] {
            let br = grid.branch(e);
            let d = sol.flows[e] * br.reactance;
            acc += if br.from_bus == v { d } else { -d };
            v = u;
        }
        acc
    };
    let mut cycles = 0;
    for br in grid.branches().iter().filter(|b| !tree[b.id]) {
        let around = sol.flows[br.id] * br.reactance - drop_to_root(br.from_bus) + drop_to_root(br.to_bus);
        assert!(around.abs() < 1e-10, "cycle through branch {}: {around}", br.id);
        cycles += 1;
    }
    assert_eq!(cycles, grid.n_branches() - (n - 1));
}

#[test]
fn ptdf_superposes() {
    let grid = case("case14.m");
    let topo = Topology::base(grid.clone()).unwrap();
    let e = DcEngine::new(grid).unwrap();
    let ab = e.ptdf(&topo, 2, 7).unwrap();
    let bc = e.ptdf(&topo, 7, 11).unwrap();
    let ac = e.ptdf(&topo, 2, 11).unwrap();
    for l in 0..ab.len() {
        assert!((ab[l] + bc[l] - ac[l]).abs() < 1e-12);
    }
}

#[test]
fn effective_reactance_of_parallel_path() {
    let grid = case("triangle.m");
    let topo = Topology::base(grid.clone()).unwrap();
    let e = DcEngine::new(grid.clone()).unwrap();
    // one leg in parallel with the two others in series
    let x: Vec<f64> = grid.branches().iter().map(|b| b.reactance).collect();
    let br = grid.branch(0);
    let expected = x[0] * (x[1] + x[2]) / (x[0] + x[1] + x[2]);
    let got = e.effective_reactance(&topo, br.from_bus, br.to_bus).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Predicted post-outage flows equal a fresh solve without the branch.
    #[test]
    fn lodf_predicts_resolve(off in proptest::collection::vec(0usize..20, 0..3), k in 0usize..20, scale in 0.2f64..3.0) {
        let grid = case("case14.m");
        let Ok(topo) = Topology::base(grid.clone()).unwrap().without(&off) else { return Ok(()) };
        prop_assume!(topo.is_active(k));
        let e = DcEngine::new(grid.clone()).unwrap();
        let col = e.lodf_column(&topo, k).unwrap();
        let bridge = topo.bridges().contains(&k);
        prop_assert_eq!(col.is_bridge(), bridge);
        let Some(d) = col.values else { return Ok(()) };
        let p: Vec<f64> = injections(&grid).iter().map(|x| x * scale).collect();
        let before = e.solve_dc(&topo, &p).unwrap().flows;
        let after_topo = topo.without(&[k]).unwrap();
        let theta = dense_angles(&grid, &after_topo, &p);
        for l in topo.active_branches() {
            let br = grid.branch(l);
            let after = if l == k { 0.0 } else { (theta[br.from_bus] - theta[br.to_bus]) / br.reactance };
            prop_assert!((d[l] * before[k] - (after - before[l])).abs() < 1e-8);
        }
    }

    /// The slack choice shifts angles but leaves flows alone.
    #[test]
    fn flows_do_not_depend_on_the_slack(slack in 0usize..14) {
        let grid = case("case14.m");
        let other = Arc::new(grid.with_slack(slack).unwrap());
        let raw = injections(&grid);
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        // balanced injections, so no bus has to absorb a mismatch
        let p: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let a = DcEngine::new(grid.clone()).unwrap().solve_dc(&Topology::base(grid.clone()).unwrap(), &p).unwrap();
        let b = DcEngine::new(other.clone()).unwrap().solve_dc(&Topology::base(other).unwrap(), &p).unwrap();
        for (x, y) in a.flows.iter().zip(&b.flows) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
