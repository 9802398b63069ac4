mod common;

use std::sync::OnceLock;

use common::*;
use doemarket::coordinator::*;
use doemarket::distflow::{loss_cost, sweep_powerflow, NodalInjections};
use doemarket::netmodel::{Case, Thresholds};
use doemarket::prosumer::{solve_local, LocalEstimates};

fn stressed(mode: Mode) -> &'static ClearingResult {
    static ADMM: OnceLock<ClearingResult> = OnceLock::new();
    static COCA: OnceLock<ClearingResult> = OnceLock::new();
    let cell = match mode {
        Mode::Admm => &ADMM,
        Mode::Coca => &COCA,
    };
    cell.get_or_init(|| run_clearing(&bundled("four_bus_stressed.json"), &ClearingOptions::new(mode)).unwrap())
}

fn record(r: [f64; 4]) -> IterationRecord {
    IterationRecord {
        iteration: 1,
        r_es: r[0],
        r_et: r[1],
        r_ds: r[2],
        r_dt: r[3],
        messages_sent: 0,
        messages_censored: 0,
        threshold: 0.0,
        exactness_gap: 0.0,
        reduced_accuracy: vec![],
    }
}

#[test]
fn threshold_schedule_is_geometric() {
    assert_eq!(adaptive_threshold(0, 2.5, 0.9), 2.5);
    assert!((adaptive_threshold(3, 1.0, 0.5) - 0.125).abs() < 1e-15);
    let partial: f64 = (0..2000).map(|k| adaptive_threshold(k, 1.0, 0.9)).sum();
    assert!((partial - 1.0 / (1.0 - 0.9)).abs() < 1e-9);
}

#[test]
fn convergence_needs_every_residual_below_its_threshold() {
    let chi = Thresholds::uniform(1.5e-5);
    assert!(check_convergence(&[record([0.0; 4]), record([0.0; 4])], &chi));
    assert!(!check_convergence(&[record([0.0; 4]), record([3e-5, 0.0, 0.0, 0.0])], &chi));
    assert!(!check_convergence(&[record([0.0; 4]), record([0.0, 0.0, 0.0, 1.6e-5])], &chi));
}

#[test]
fn lone_prosumer_without_envelopes_settles_at_once() {
    let case = bundled("two_node.json");
    let mut options = ClearingOptions::new(Mode::Admm);
    options.doe_enabled = false;
    let run = run_clearing(&case, &options).unwrap();
    assert!(run.converged && run.iterations <= 2, "{} iterations", run.iterations);

    let spec = &case.prosumers[0];
    let mut est = LocalEstimates::initial(spec, &case.market);
    est.allocation = vec![DOE_OFF_ENVELOPE; case.horizon()];
    let (alone, _) = solve_local(spec, &est, &case.market, case.network.delta_t).unwrap();
    for t in 0..case.horizon() {
        assert!((run.decisions[0].p_inj[t] - alone.p_inj[t]).abs() < 1e-6);
        assert!((run.decisions[0].p_batt[t] - alone.p_batt[t]).abs() < 1e-6);
    }
    let last = run.trace.last().unwrap();
    assert_eq!((last.r_ds, last.r_dt), (0.0, 0.0));
}

#[test]
fn oracle_without_prosumers_prices_fixed_losses() {
    let mut case = bundled("four_bus_stressed.json");
    case.prosumers.clear();
    case.validate().unwrap();
    let oracle = solve_centralized_oracle(&case).unwrap();
    let base = sweep_powerflow(&case.network, &NodalInjections::fixed_loads(&case.network)).unwrap();
    let expected = loss_cost(&base, &case.market.pi, case.network.delta_t);
    assert!((oracle.objective - expected).abs() < 1e-6);
    assert!(oracle.exactness_gap <= 1e-5);
}

#[test]
fn the_dso_only_ever_hears_asks() {
    for mode in [Mode::Admm, Mode::Coca] {
        let run = stressed(mode);
        assert!(!run.deliveries.is_empty());
        for d in &run.deliveries {
            match d.to {
                Endpoint::Dso => assert_eq!(d.kind, "envelope_ask"),
                Endpoint::Prosumer(_) => assert_ne!(d.kind, "envelope_ask"),
            }
            if d.from == Endpoint::Dso {
                assert_eq!(d.kind, "envelope_grant");
            }
        }
    }
    // the ask payload carries one number per period and nothing else
    let ask = serde_json::to_value(Payload::EnvelopeAsk { ask: vec![1.0, 2.0] }).unwrap();
    assert_eq!(ask, serde_json::json!({"EnvelopeAsk": {"ask": [1.0, 2.0]}}));
}

#[test]
fn every_pair_decision_is_accounted() {
    let case = bundled("four_bus_stressed.json");
    for mode in [Mode::Admm, Mode::Coca] {
        let run = stressed(mode);
        for rec in &run.trace {
            assert_eq!(rec.messages_sent + rec.messages_censored, case.num_directed_pairs());
        }
        if mode == Mode::Admm {
            assert_eq!(run.messages_censored(), 0);
        }
    }
}

#[test]
fn coca_matches_admm_with_fewer_messages() {
    let (admm, coca) = (stressed(Mode::Admm), stressed(Mode::Coca));
    assert!(admm.converged && coca.converged);
    assert!((admm.objective - coca.objective).abs() <= 1e-3 * admm.objective.abs());
    assert!(coca.messages_sent() <= admm.messages_sent());
}

#[test]
fn runs_are_deterministic() {
    let case = bundled("four_bus_stressed.json");
    let again = run_clearing(&case, &ClearingOptions::new(Mode::Coca)).unwrap();
    let first = stressed(Mode::Coca);
    assert_eq!(again.trace.len(), first.trace.len());
    for (a, b) in again.trace.iter().zip(&first.trace) {
        for (x, y) in [(a.r_es, b.r_es), (a.r_et, b.r_et), (a.r_ds, b.r_ds), (a.r_dt, b.r_dt)] {
            assert!((x - y).abs() <= 1e-9);
        }
        assert_eq!(a.messages_sent, b.messages_sent);
    }
}

#[test]
fn power_is_conserved_at_convergence() {
    for mode in [Mode::Admm, Mode::Coca] {
        let run = stressed(mode);
        assert!(run.integrity.conservation_residual <= 1e-5, "{}", run.integrity.conservation_residual);
        for d in &run.decisions {
            for t in 0..d.p_buy.len() {
                assert!(d.p_buy[t] * d.p_sell[t] <= 1e-8);
            }
        }
    }
}

#[test]
fn envelope_gap_shrinks_over_the_tail() {
    let chain = run_clearing(&bundled("chain15.json"), &ClearingOptions::new(Mode::Admm)).unwrap();
    for run in [stressed(Mode::Admm), &chain] {
        let n = run.trace.len();
        let tail = &run.trace[n - n / 5..];
        for w in tail.windows(2) {
            assert!(w[1].r_ds <= w[0].r_ds * (1.0 + 1e-3) + 1e-13, "{} after {}", w[1].r_ds, w[0].r_ds);
        }
    }
}

#[test]
fn envelopes_off_grants_a_constant_cap() {
    let mut options = ClearingOptions::new(Mode::Admm);
    options.doe_enabled = false;
    let case: Case = bundled("four_bus_stressed.json");
    let run = run_clearing(&case, &options).unwrap();
    assert!(run.converged);
    assert!(run.envelope.allocation.iter().flatten().all(|a| *a == DOE_OFF_ENVELOPE));
    assert!(run.envelope.psi.iter().flatten().all(|p| *p == 0.0));
    assert!(run.breakdown.is_none());
}
