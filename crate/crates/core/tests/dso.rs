mod common;

use common::*;
use doemarket::distflow::{loss_cost, sweep_powerflow, NetworkDuals, NodalInjections};
use doemarket::dso::*;
use doemarket::netmodel::{Case, NetworkCase};
use proptest::prelude::*;

fn params(case: &Case, rho: f64) -> DsoParams {
    DsoParams { pi: case.market.pi.clone(), rho, scenarios: case.market.scenarios, solver_tol: case.market.solver_tol }
}

fn zeros(n: usize, horizon: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; horizon]; n]
}

#[test]
fn zero_asks_cost_only_the_fixed_load_losses() {
    let case = bundled("four_bus_stressed.json");
    let nodes = prosumer_nodes(&case);
    let out = solve_dso(&case.network, &nodes, &zeros(2, 4), &zeros(2, 4), &params(&case, 1e5)).unwrap();
    assert!(max_abs_diff(&out.allocation, &zeros(2, 4)) < 1e-4);
    let base = sweep_powerflow(&case.network, &NodalInjections::fixed_loads(&case.network)).unwrap();
    let expected = loss_cost(&base, &case.market.pi, case.network.delta_t);
    assert!((out.objective - expected).abs() < 1e-6, "{} vs {expected}", out.objective);
    assert!((out.loss_cost - expected).abs() < 1e-6);
}

#[test]
fn envelopes_thin_out_along_the_chain() {
    let case = bundled("chain15.json");
    let nodes = prosumer_nodes(&case);
    let horizon = case.horizon();
    let asks = vec![vec![5.0; horizon]; 3];
    let out = solve_dso(&case.network, &nodes, &asks, &zeros(3, horizon), &params(&case, 0.1)).unwrap();
    assert!(out.exactness_gap <= 1e-5, "{}", out.exactness_gap);
    for t in 0..horizon {
        let a: Vec<f64> = out.allocation.iter().map(|row| row[t]).collect();
        assert!(a[0] >= a[1] - 1e-6 && a[1] >= a[2] - 1e-6, "t{t}: {a:?}");
        assert!(a[2] < 5.0 - 1e-3, "the far end is capped");
    }
}

#[test]
fn uniform_chain_gives_the_terminal_the_least() {
    let net = chain(6, 0.01, 0.005, 1, 1.04);
    let nodes = [2, 4, 5];
    let out = solve_dso(
        &net,
        &nodes,
        &[vec![3.0], vec![3.0], vec![3.0]],
        &zeros(3, 1),
        &DsoParams { pi: vec![1.0], rho: 0.5, scenarios: 2, solver_tol: 1e-9 },
    )
    .unwrap();
    let a: Vec<f64> = out.allocation.iter().map(|r| r[0]).collect();
    assert!(a[2] < 3.0 - 1e-3);
    assert!(a[2] <= a[1] + 1e-6 && a[1] <= a[0] + 1e-6, "{a:?}");
}

#[test]
fn agent_step_advances_the_price() {
    let case = bundled("four_bus_stressed.json");
    let ids: Vec<_> = case.prosumers.iter().map(|p| p.node).collect();
    let mut agent = DsoAgent::new(case.network.clone(), &ids, params(&case, 0.3)).unwrap();
    let asks = vec![vec![2.0, 1.0, 3.0, 0.5], vec![4.0, 7.0, 7.0, 1.0]];
    let before = agent.psi.clone();
    let outcome = agent.step(&asks).unwrap();
    assert!(outcome.exactness_gap <= 1e-5, "{}", outcome.exactness_gap);
    let alloc = outcome.allocation.clone();
    assert_eq!(agent.psi, update_doe_price(&before, &alloc, &asks, 0.3));
    assert_eq!(agent.allocation, alloc);

    let breakdown = agent.breakdown().unwrap().unwrap();
    for (i, row) in breakdown.components.iter().enumerate() {
        for (t, c) in row.iter().enumerate() {
            let scale = agent.psi[i][t].abs().max(1.0);
            assert!(c.residual <= 1e-3 * scale, "i{i} t{t}: {c:?} psi {}", agent.psi[i][t]);
        }
    }
}

#[test]
fn interior_optimum_has_no_congestion_or_voltage_price() {
    let case = bundled("four_bus_stressed.json");
    let ids: Vec<_> = case.prosumers.iter().map(|p| p.node).collect();
    let mut agent = DsoAgent::new(case.network.clone(), &ids, params(&case, 1.0)).unwrap();
    agent.step(&[vec![0.2; 4], vec![0.3; 4]]).unwrap();
    let breakdown = agent.breakdown().unwrap().unwrap();
    for c in breakdown.components.iter().flatten() {
        assert!(c.congestion_send.abs() < 1e-7 && c.congestion_recv.abs() < 1e-7 && c.voltage.abs() < 1e-7, "{c:?}");
        assert!(c.residual < 1e-4);
    }
}

#[test]
fn lossless_network_has_no_loss_price() {
    let net = chain(4, 0.0, 0.0, 2, 1.1);
    let shape = |v: f64| vec![vec![vec![v; 4]; 2]; 1];
    let duals = NetworkDuals {
        eta: vec![vec![vec![0.3; 3]; 2]],
        delta: vec![vec![vec![0.1; 3]; 2]],
        tau_plus: shape(0.2),
        tau_minus: shape(0.05),
        omega_p: vec![vec![0.7; 2]],
        omega_q: vec![vec![0.4; 2]],
    };
    let alloc = vec![vec![0.5, 0.2], vec![0.1, 0.3]];
    let b = decompose_price(&net, &[2, 3], &alloc, &duals, &zeros(2, 2), &[1.0, 1.0], 1).unwrap();
    for c in b.components.iter().flatten() {
        assert!(c.loss.abs() < 1e-9, "{c:?}");
        // the energy price passes through unchanged
        assert!((c.energy - 0.7).abs() < 1e-12);
    }
}

fn scalar_losses(r: f64, p: f64) -> f64 {
    // an export p is a withdrawal of −p: l = (r·l − p)² at v0 = 1
    let mut l = 0.0;
    for _ in 0..200 {
        l = (r * l - p) * (r * l - p);
    }
    r * l
}

#[test]
fn dso_cost_averages_the_scenarios() {
    let net = chain(2, 0.02, 0.0, 1, 1.2);
    assert_eq!(dso_cost(&net, &[1], &[vec![0.0]], 3, &[1.0]).unwrap(), 0.0);

    let alloc = [vec![0.6]];
    let full = sweep_powerflow(&net, &NodalInjections::with_prosumers(&net, &[1], &alloc)).unwrap();
    assert!((dso_cost(&net, &[1], &alloc, 1, &[2.0]).unwrap() - loss_cost(&full, &[2.0], 1.0)).abs() < 1e-15);

    let oracle = (1..=4).map(|s| scalar_losses(0.02, s as f64 / 4.0 * 0.6)).sum::<f64>() / 4.0;
    let cost = dso_cost(&net, &[1], &alloc, 4, &[1.0]).unwrap();
    assert!((cost - oracle).abs() < 1e-10, "{cost} vs {oracle}");
}

fn envelope_check(case: &Case, asks: &[Vec<f64>], psi: &[Vec<f64>], rho: f64) {
    let nodes = prosumer_nodes(case);
    let p = params(case, rho);
    let base = solve_dso(&case.network, &nodes, asks, psi, &p).unwrap();
    let next = update_doe_price(psi, &base.allocation, asks, rho);
    let h = 1e-4;
    for i in 0..asks.len() {
        for t in 0..asks[i].len() {
            let mut up = asks.to_vec();
            up[i][t] += h;
            let mut down = asks.to_vec();
            down[i][t] -= h;
            let fu = solve_dso(&case.network, &nodes, &up, psi, &p).unwrap().objective;
            let fd = solve_dso(&case.network, &nodes, &down, psi, &p).unwrap().objective;
            let slope = (fu - fd) / (2.0 * h) / case.network.delta_t;
            let target = -next[i][t];
            let tol = f64::max(1e-3, 0.01 * target.abs());
            assert!((slope - target).abs() <= tol, "i{i} t{t}: {slope} vs {target}");
        }
    }
}

#[test]
fn objective_slope_is_minus_the_updated_price() {
    let case = bundled("four_bus_stressed.json");
    envelope_check(&case, &[vec![1.0, -0.5, 2.0, 1.5], vec![3.0, 4.0, 9.0, 1.0]], &[vec![0.0; 4], vec![-0.05; 4]], 0.2);
    let chain = bundled("chain15.json");
    let h = chain.horizon();
    envelope_check(&chain, &vec![vec![2.0; h]; 3], &zeros(3, h), 0.1);
}

#[test]
fn allocation_is_feasible_on_the_exact_flow() {
    let case = bundled("four_bus_stressed.json");
    let nodes = prosumer_nodes(&case);
    let out = solve_dso(&case.network, &nodes, &[vec![2.0; 4], vec![9.0; 4]], &zeros(2, 4), &params(&case, 0.2)).unwrap();
    for s in 1..=case.market.scenarios {
        let share = s as f64 / case.market.scenarios as f64;
        let inj: Vec<Vec<f64>> = out.allocation.iter().map(|a| a.iter().map(|x| share * x).collect()).collect();
        let sol = sweep_powerflow(&case.network, &NodalInjections::with_prosumers(&case.network, &nodes, &inj)).unwrap();
        assert!(sol.voltage_violations(&case.network, 1e-4).is_empty());
        assert!(sol.line_overloads(&case.network, 1e-4).is_empty());
    }
}

fn network_of(case: &Case) -> &NetworkCase {
    &case.network
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn agreement_leaves_the_price_alone(psi in proptest::collection::vec(-1.0f64..1.0, 4), x in proptest::collection::vec(-2.0f64..2.0, 4), rho in 0.01f64..10.0) {
        let next = update_doe_price(&[psi.clone()], &[x.clone()], &[x], rho);
        prop_assert_eq!(next, vec![psi]);
    }

    #[test]
    fn ordering_holds_for_any_uniform_ask(ask in 2.0f64..8.0, rho in 0.05f64..2.0) {
        let case = bundled("chain15.json");
        let nodes = prosumer_nodes(&case);
        let h = case.horizon();
        let out = solve_dso(network_of(&case), &nodes, &vec![vec![ask; h]; 3], &zeros(3, h), &params(&case, rho)).unwrap();
        for t in 0..h {
            prop_assert!(out.allocation[0][t] >= out.allocation[1][t] - 1e-6);
            prop_assert!(out.allocation[1][t] >= out.allocation[2][t] - 1e-6);
        }
    }
}
