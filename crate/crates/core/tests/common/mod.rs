#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use doemarket::netmodel::{
    Battery, Case, Line, MarketParams, NetworkCase, NodalSeries, NodeId, P2gLimits, ProsumerSpec, Thresholds,
    VoltageBound,
};

pub fn cases_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

pub fn bundled(name: &str) -> Case {
    Case::load(cases_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const BUNDLED: [&str; 3] = ["two_node.json", "four_bus_stressed.json", "chain15.json"];

pub fn market(horizon: usize) -> MarketParams {
    MarketParams {
        fit: vec![0.1; horizon],
        tou: vec![0.2; horizon],
        pi: vec![1.0; horizon],
        rho: 1.0,
        alpha: 0.0,
        m0: 1.0,
        tau_m: 0.9,
        scenarios: 1,
        thresholds: Thresholds::uniform(1e-8),
        max_iters: 500,
        solver_tol: 1e-9,
        terminal_soc: true,
        dso_steps: 1,
    }
}

/// Feeder 0–1 with one line and the given withdrawal at node 1.
pub fn two_node(r: f64, x: f64, p: &[f64], q: &[f64]) -> NetworkCase {
    let mut loads = BTreeMap::new();
    loads.insert(1, NodalSeries { p: p.to_vec(), q: q.to_vec() });
    NetworkCase::new(
        vec![0, 1],
        vec![Line { from: 0, to: 1, r, x, s_max: 10.0 }],
        1.0,
        VoltageBound::Uniform(0.8),
        VoltageBound::Uniform(1.2),
        loads,
        1.0,
        p.len(),
    )
    .unwrap()
}

/// Chain 0–1–…–(n−1) with identical lines and no loads.
pub fn chain(n: usize, r: f64, x: f64, horizon: usize, vmax: f64) -> NetworkCase {
    NetworkCase::new(
        (0..n).collect(),
        (1..n).map(|k| Line { from: k - 1, to: k, r, x, s_max: 10.0 }).collect(),
        1.0,
        VoltageBound::Uniform(0.9),
        VoltageBound::Uniform(vmax),
        BTreeMap::new(),
        1.0,
        horizon,
    )
    .unwrap()
}

pub fn prosumer(node: NodeId, demand: &[f64], res: &[f64], partners: Vec<NodeId>) -> ProsumerSpec {
    ProsumerSpec {
        node,
        battery: Battery::none(),
        demand: demand.to_vec(),
        res: res.to_vec(),
        p2g: P2gLimits { buy_max: 2.0, sell_max: 2.0 },
        partners,
        import_limit: vec![2.0; demand.len()],
    }
}

pub fn prosumer_nodes(case: &Case) -> Vec<usize> {
    case.prosumers.iter().map(|p| case.network.index_of(p.node).unwrap()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
