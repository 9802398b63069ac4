mod common;

use std::collections::{BTreeMap, VecDeque};

use common::*;
use doemarket::netmodel::{Case, CaseError, Line, NetworkCase, VoltageBound};
use proptest::prelude::*;

fn tree_from_parents(parents: &[usize], flips: &[bool]) -> NetworkCase {
    let lines = parents
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let child = k + 1;
            let (from, to) = if flips[k] { (child, p) } else { (p, child) };
            Line { from, to, r: 0.01, x: 0.01, s_max: 1.0 }
        })
        .collect();
    NetworkCase::new(
        (0..=parents.len()).collect(),
        lines,
        1.0,
        VoltageBound::Uniform(0.9),
        VoltageBound::Uniform(1.1),
        BTreeMap::new(),
        1.0,
        1,
    )
    .unwrap()
}

/// Path to the root found by a breadth-first search over an undirected
/// adjacency list, independent of the topology the case builds.
fn bfs_path(net: &NetworkCase, node: usize) -> Vec<usize> {
    let n = net.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for (j, l) in net.lines.iter().enumerate() {
        adj[l.from].push((l.to, j));
        adj[l.to].push((l.from, j));
    }
    let mut via = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, j) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                via[v] = Some((u, j));
                queue.push_back(v);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = node;
    while let Some((up, j)) = via[cur] {
        path.push(j);
        cur = up;
    }
    path
}

fn parents_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<bool>)> {
    (2usize..20).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|k| 0..k).collect();
        (parents, proptest::collection::vec(any::<bool>(), n - 1))
    })
}

#[test]
fn minimal_document_loads() {
    let doc = r#"{
      "network": {"nodes": [0, 1], "lines": [{"from": 0, "to": 1, "r": 0.01, "x": 0.01, "s_max": 1.0}],
                  "v0": 1.0, "vmin": 0.95, "vmax": 1.05},
      "prosumers": [{"node": 1, "battery": {"p_min": 0, "p_max": 0, "e_min": 0, "e_max": 0, "e0": 0},
                     "demand": [0.1], "res": [0.0], "p2g": {"buy_max": 1, "sell_max": 1},
                     "partners": [], "import_limit": [1.0]}],
      "market": {"fit": [0.10], "tou": [0.20], "pi": [0.15], "rho": 1.0, "alpha": 0.0, "m0": 1.0,
                 "tau_m": 0.9, "scenarios": 1,
                 "thresholds": {"chi_es": 1.5e-5, "chi_et": 1.5e-5, "chi_ds": 1.5e-5, "chi_dt": 1.5e-5},
                 "max_iters": 100, "solver_tol": 1e-8}
    }"#;
    let case = Case::from_json(doc).unwrap();
    assert_eq!(case.network.lines.len(), 1);
    // ToU at twice the FiT is the usual tariff shape
    assert_eq!(case.market.tou[0], 2.0 * case.market.fit[0]);
    assert_eq!(case.market.thresholds.chi_es, 1.5e-5);

    let cyclic = doc.replace(
        r#""s_max": 1.0}],"#,
        r#""s_max": 1.0}, {"from": 1, "to": 0, "r": 0.01, "x": 0.01, "s_max": 1.0}],"#,
    );
    assert!(matches!(Case::from_json(&cyclic), Err(CaseError::Topology(_))));
}

#[test]
fn bundled_cases_validate() {
    for name in BUNDLED {
        let case = bundled(name);
        assert_eq!(case.network.num_lines() + 1, case.network.num_nodes(), "{name}");
        for p in &case.prosumers {
            for j in &p.partners {
                assert!(case.prosumers[case.prosumer_index(*j).unwrap()].partners.contains(&p.node));
            }
        }
    }
}

#[test]
fn chain_paths() {
    let net = chain(3, 0.01, 0.01, 1, 1.1);
    assert!(net.path_to_root(0).unwrap().is_empty());
    let path = net.path_to_root(2).unwrap();
    let ends: Vec<_> = path.iter().map(|&j| (net.lines[j].from, net.lines[j].to)).collect();
    assert_eq!(ends, vec![(1, 2), (0, 1)]);
    assert!(matches!(net.path_to_root(7), Err(CaseError::UnknownNode(7))));
}

#[test]
fn fifteen_node_paths_match_bfs() {
    let case = bundled("chain15.json");
    for &node in &case.network.nodes {
        assert_eq!(case.network.path_to_root(node).unwrap(), bfs_path(&case.network, node));
    }
    // a branchy fifteen-node tree
    let parents = [0, 0, 1, 1, 2, 2, 3, 4, 4, 5, 8, 8, 11, 6];
    let flips = [false, true, false, true, true, false, false, true, false, true, false, true, false, true];
    let net = tree_from_parents(&parents, &flips);
    for node in 0..15 {
        assert_eq!(net.path_to_root(node).unwrap(), bfs_path(&net, node));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_end_at_the_root((parents, flips) in parents_strategy()) {
        let net = tree_from_parents(&parents, &flips);
        for node in 1..net.nodes.len() {
            let path = net.path_to_root(node).unwrap();
            prop_assert_eq!(&path, &bfs_path(&net, node));
            let last = &net.lines[*path.last().unwrap()];
            prop_assert!(last.from == 0 || last.to == 0);
        }
    }

    #[test]
    fn json_round_trip(
        scale in 0.1f64..3.0,
        rho in 1e-3f64..10.0,
        chi in 1e-9f64..1e-3,
        pick in 0usize..3,
    ) {
        let mut case = bundled(BUNDLED[pick]);
        for series in case.network.fixed_loads.values_mut() {
            for v in series.q.iter_mut() { *v *= scale; }
        }
        for p in &mut case.prosumers {
            for v in p.demand.iter_mut() { *v *= scale; }
        }
        case.market.rho = rho;
        case.market.thresholds.chi_dt = chi;
        let back = Case::from_json(&case.to_json()).unwrap();
        prop_assert_eq!(back, case);
    }

    #[test]
    fn asymmetric_partners_never_load(pick in 0usize..3, drop in 0usize..8) {
        let mut case = bundled(BUNDLED[pick]);
        let with_partners: Vec<usize> = (0..case.prosumers.len())
            .filter(|&i| !case.prosumers[i].partners.is_empty())
            .collect();
        prop_assume!(!with_partners.is_empty());
        let i = with_partners[drop % with_partners.len()];
        case.prosumers[i].partners.pop();
        let loaded = Case::from_json(&serde_json::to_string(&case).unwrap());
        prop_assert!(matches!(loaded, Err(CaseError::AsymmetricPartners(..))), "{:?}", loaded.err());
    }
}
