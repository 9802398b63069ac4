//! Market-clearing loop: synchronous prosumer and DSO iterations over an
//! in-process message bus, convergence tests and the centralized reference
//! solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{solve_conic, Affine, ConicProgram, SolverError};
use crate::distflow::{
    add_loss_cost, add_network_block, check_exactness, loss_cost, sweep_powerflow, NodalInjections,
    PowerFlowError, PowerFlowSolution,
};
use crate::dso::{squared_distance, DsoAgent, DsoError, DsoParams, EnvelopeState, PriceBreakdown};
use crate::netmodel::{Case, CaseError, NodeId, Thresholds};
use crate::prosumer::{add_prosumer_block, LocalDecision, LocalEstimates, PriceReport, ProsumerAgent, ProsumerError};

/// Envelope granted to every prosumer when DOE negotiation is switched off, pu.
pub const DOE_OFF_ENVELOPE: f64 = 1e3;

/// Tolerance of the integrity checks on voltages and line ratings, pu.
pub const INTEGRITY_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClearingError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Prosumer(#[from] ProsumerError),
    #[error(transparent)]
    Dso(#[from] DsoError),
    #[error("power flow verification failed: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("centralized solve failed: {0}")]
    Oracle(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every prosumer transmits every iteration.
    Admm,
    /// Communication-censored ADMM.
    Coca,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Admm => "admm",
            Mode::Coca => "coca",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClearingOptions {
    pub mode: Mode,
    /// With envelopes off the DSO never solves and grants a huge constant.
    pub doe_enabled: bool,
    /// Keep per-agent trace rows and the message log.
    pub record_agents: bool,
}

impl ClearingOptions {
    pub fn new(mode: Mode) -> Self {
        ClearingOptions { mode, doe_enabled: true, record_agents: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Prosumer(NodeId),
    Dso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    TradeOffer { amounts: Vec<f64> },
    EnvelopeAsk { ask: Vec<f64> },
    EnvelopeGrant { allocation: Vec<f64>, psi: Vec<f64> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::TradeOffer { .. } => "trade_offer",
            Payload::EnvelopeAsk { .. } => "envelope_ask",
            Payload::EnvelopeGrant { .. } => "envelope_grant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub iteration: usize,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload: Payload,
}

/// Delivery record kept by the bus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub iteration: usize,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: String,
}

/// In-process transport. Messages posted during an iteration are held until
/// the barrier, then handed out per recipient.
#[derive(Clone, Debug, Default)]
pub struct MessageBus {
    pending: Vec<Message>,
    log: Vec<Delivery>,
    keep_log: bool,
}

impl MessageBus {
    pub fn new(keep_log: bool) -> Self {
        MessageBus { keep_log, ..Default::default() }
    }

    /// Posts a message. Trade offers addressed to the DSO and grants
    /// addressed to anyone but a prosumer are rejected.
    pub fn post(&mut self, message: Message) {
        let allowed = match (&message.payload, message.to) {
            (Payload::TradeOffer { .. }, Endpoint::Prosumer(_)) => true,
            (Payload::EnvelopeAsk { .. }, Endpoint::Dso) => true,
            (Payload::EnvelopeGrant { .. }, Endpoint::Prosumer(_)) => message.from == Endpoint::Dso,
            _ => false,
        };
        assert!(allowed, "{} may not be sent to {:?}", message.payload.kind(), message.to);
        self.pending.push(message);
    }

    /// Releases every pending message for `to`, in posting order.
    pub fn deliver(&mut self, to: Endpoint) -> Vec<Message> {
        let (mine, rest): (Vec<_>, Vec<_>) = self.pending.drain(..).partition(|m| m.to == to);
        self.pending = rest;
        if self.keep_log {
            self.log.extend(mine.iter().map(|m| Delivery {
                iteration: m.iteration,
                from: m.from,
                to: m.to,
                kind: m.payload.kind().to_string(),
            }));
        }
        mine
    }

    pub fn log(&self) -> &[Delivery] {
        &self.log
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Residuals and communication counts of one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Σ (e_ij + e_ji)² over directed pairs.
    pub r_es: f64,
    /// Σ (e^k − e^{k−1})².
    pub r_et: f64,
    /// Σ (P^{dso,e} − P^e)².
    pub r_ds: f64,
    /// Σ (P^{dso,e,k} − P^{dso,e,k−1})².
    pub r_dt: f64,
    pub messages_sent: usize,
    pub messages_censored: usize,
    pub threshold: f64,
    /// Worst cone gap of this iteration's DSO solves.
    pub exactness_gap: f64,
    /// Prosumers whose local solve ended at reduced accuracy.
    pub reduced_accuracy: Vec<NodeId>,
}

/// One row per (iteration, prosumer, partner, period).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTraceRow {
    pub iter: usize,
    pub i: NodeId,
    pub j: NodeId,
    pub t: usize,
    pub e: f64,
    pub e_hat: f64,
    pub lambda: f64,
    pub sent: bool,
}

/// One row per (iteration, prosumer, period).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoeTraceRow {
    pub iter: usize,
    pub i: NodeId,
    pub t: usize,
    pub ask: f64,
    pub allocation: f64,
    pub psi: f64,
}

/// Exact power-flow check of the cleared injections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    /// (node index, period) pairs outside the voltage band.
    pub voltage_violations: usize,
    pub line_overloads: usize,
    pub max_voltage_violation: f64,
    /// Σ_t ΔT Σ_j R_j l_j, pu·h.
    pub loss_energy: f64,
    /// Worst |p₀ − (Σ withdrawals − Σ injections + losses)| over periods.
    pub conservation_residual: f64,
    /// Cone gap of the last DSO solve.
    pub final_exactness_gap: f64,
    /// Worst cone gap over every DSO solve of the run.
    pub max_exactness_gap: f64,
}

#[derive(Clone, Debug)]
pub struct ClearingResult {
    pub mode: Mode,
    pub doe_enabled: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Prosumer node ids, in case order.
    pub prosumers: Vec<NodeId>,
    pub decisions: Vec<LocalDecision>,
    pub reports: Vec<PriceReport>,
    pub estimates: Vec<LocalEstimates>,
    pub envelope: EnvelopeState,
    pub breakdown: Option<PriceBreakdown>,
    pub trace: Vec<IterationRecord>,
    pub agent_trace: Vec<AgentTraceRow>,
    pub doe_trace: Vec<DoeTraceRow>,
    pub deliveries: Vec<Delivery>,
    pub flows: PowerFlowSolution,
    pub integrity: IntegrityReport,
    pub surpluses: Vec<f64>,
    /// Scenario-averaged loss cost of the envelopes.
    pub network_cost: f64,
    /// Network cost plus net grid cost of all prosumers. Peer-to-peer
    /// payments are transfers between prosumers and do not enter.
    pub objective: f64,
}

impl ClearingResult {
    pub fn total_surplus(&self) -> f64 {
        self.surpluses.iter().sum()
    }

    pub fn messages_sent(&self) -> usize {
        self.trace.iter().map(|r| r.messages_sent).sum()
    }

    pub fn messages_censored(&self) -> usize {
        self.trace.iter().map(|r| r.messages_censored).sum()
    }
}

/// `m^k = m₀ τ_m^k`.
pub fn adaptive_threshold(k: usize, m0: f64, tau_m: f64) -> f64 {
    m0 * tau_m.powi(k as i32)
}

/// True once at least two iterations ran and all four residuals are within
/// their thresholds.
pub fn check_convergence(trace: &[IterationRecord], thresholds: &Thresholds) -> bool {
    match trace.last() {
        Some(r) if trace.len() >= 2 => {
            r.r_es <= thresholds.chi_es
                && r.r_et <= thresholds.chi_et
                && r.r_ds <= thresholds.chi_ds
                && r.r_dt <= thresholds.chi_dt
        }
        _ => false,
    }
}

fn prosumer_node_indices(case: &Case) -> Result<Vec<usize>, CaseError> {
    case.prosumers.iter().map(|p| case.network.index_of(p.node)).collect()
}

fn pair_index(case: &Case) -> Vec<Vec<(usize, usize)>> {
    // for prosumer i and partner position pos: (partner index, i's position in the partner's list)
    case.prosumers
        .iter()
        .map(|p| {
            p.partners
                .iter()
                .map(|&j| {
                    let jj = case.prosumer_index(j).expect("validated partner");
                    let back = case.prosumers[jj].partners.iter().position(|&x| x == p.node).expect("symmetric");
                    (jj, back)
                })
                .collect()
        })
        .collect()
}

/// Runs the negotiation until convergence or `max_iters`.
///
/// A run that hits the iteration cap still returns its last state with
/// `converged == false`.
pub fn run_clearing(case: &Case, options: &ClearingOptions) -> Result<ClearingResult, ClearingError> {
    let market = &case.market;
    let dt = case.network.delta_t;
    let horizon = case.horizon();
    let alpha = match options.mode {
        Mode::Admm => 0.0,
        Mode::Coca => market.alpha,
    };
    let nodes: Vec<NodeId> = case.prosumers.iter().map(|p| p.node).collect();
    let pairs = pair_index(case);

    let mut agents: Vec<ProsumerAgent> = case.prosumers.iter().map(|s| ProsumerAgent::new(s.clone(), market)).collect();
    let mut dso = DsoAgent::new(
        case.network.clone(),
        &nodes,
        DsoParams { pi: market.pi.clone(), rho: market.rho, scenarios: market.scenarios, solver_tol: market.solver_tol },
    )?;
    if !options.doe_enabled {
        for a in &mut agents {
            a.receive_grant(&vec![DOE_OFF_ENVELOPE; horizon], &vec![0.0; horizon]);
        }
    }
    let mut bus = MessageBus::new(options.record_agents);

    let mut trace = Vec::new();
    let mut agent_trace = Vec::new();
    let mut doe_trace = Vec::new();
    let mut prev_trades: Vec<Vec<Vec<f64>>> = agents.iter().map(|a| vec![vec![0.0; horizon]; a.partners().len()]).collect();
    let mut prev_grant: Vec<Vec<f64>> = agents.iter().map(|a| a.estimates.allocation.clone()).collect();
    let mut last: Option<(Vec<LocalDecision>, Vec<PriceReport>)> = None;
    let mut max_gap: f64 = 0.0;
    let mut converged = false;

    for k in 1..=market.max_iters {
        let solved = agents
            .par_iter()
            .map(|a| a.solve(market, dt))
            .collect::<Result<Vec<_>, _>>()?;
        let (decisions, reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();

        // P2P loop: censoring decision per prosumer, one message per partner
        let threshold = adaptive_threshold(k, market.m0, market.tau_m);
        let mut sent = 0;
        let mut censored = 0;
        let mut sent_by = vec![false; agents.len()];
        for (i, agent) in agents.iter().enumerate() {
            let send = agent.should_send(&decisions[i], alpha, threshold);
            sent_by[i] = send;
            for (pos, &j) in agent.partners().iter().enumerate() {
                if send {
                    bus.post(Message {
                        iteration: k,
                        from: Endpoint::Prosumer(agent.node()),
                        to: Endpoint::Prosumer(j),
                        payload: Payload::TradeOffer { amounts: decisions[i].trades[pos].clone() },
                    });
                    sent += 1;
                } else {
                    censored += 1;
                }
            }
            bus.post(Message {
                iteration: k,
                from: Endpoint::Prosumer(agent.node()),
                to: Endpoint::Dso,
                payload: Payload::EnvelopeAsk { ask: decisions[i].ask.clone() },
            });
        }
        for (i, agent) in agents.iter_mut().enumerate() {
            for msg in bus.deliver(Endpoint::Prosumer(agent.node())) {
                if let (Endpoint::Prosumer(from), Payload::TradeOffer { amounts }) = (msg.from, &msg.payload) {
                    agent.receive_offer(from, amounts);
                }
            }
            agent.update(&decisions[i], market.rho);
        }

        // DOE loop
        let mut asks = vec![Vec::new(); agents.len()];
        for msg in bus.deliver(Endpoint::Dso) {
            if let (Endpoint::Prosumer(from), Payload::EnvelopeAsk { ask }) = (msg.from, msg.payload) {
                let i = nodes.iter().position(|&n| n == from).expect("known sender");
                asks[i] = ask;
            }
        }
        let mut gap_k: f64 = 0.0;
        let (grant, psi) = if options.doe_enabled {
            for _ in 0..market.dso_steps {
                let outcome = dso.step(&asks)?;
                gap_k = gap_k.max(outcome.exactness_gap);
            }
            (dso.allocation.clone(), dso.psi.clone())
        } else {
            (vec![vec![DOE_OFF_ENVELOPE; horizon]; agents.len()], vec![vec![0.0; horizon]; agents.len()])
        };
        max_gap = max_gap.max(gap_k);
        for (i, agent) in agents.iter().enumerate() {
            bus.post(Message {
                iteration: k,
                from: Endpoint::Dso,
                to: Endpoint::Prosumer(agent.node()),
                payload: Payload::EnvelopeGrant { allocation: grant[i].clone(), psi: psi[i].clone() },
            });
        }
        for agent in agents.iter_mut() {
            for msg in bus.deliver(Endpoint::Prosumer(agent.node())) {
                if let Payload::EnvelopeGrant { allocation, psi } = &msg.payload {
                    agent.receive_grant(allocation, psi);
                }
            }
        }
        debug_assert!(bus.is_idle());

        let mut r_es = 0.0;
        let mut r_et = 0.0;
        for (i, d) in decisions.iter().enumerate() {
            for (pos, &(jj, back)) in pairs[i].iter().enumerate() {
                for t in 0..horizon {
                    let e = d.trades[pos][t];
                    r_es += (e + decisions[jj].trades[back][t]).powi(2);
                    r_et += (e - prev_trades[i][pos][t]).powi(2);
                }
            }
        }
        let (r_ds, r_dt) = if options.doe_enabled {
            (squared_distance(&grant, &asks), squared_distance(&grant, &prev_grant))
        } else {
            (0.0, 0.0)
        };

        if options.record_agents {
            for (i, agent) in agents.iter().enumerate() {
                for (pos, &j) in agent.partners().iter().enumerate() {
                    for t in 0..horizon {
                        agent_trace.push(AgentTraceRow {
                            iter: k,
                            i: agent.node(),
                            j,
                            t,
                            e: decisions[i].trades[pos][t],
                            e_hat: agent.estimates.e_hat[pos][t],
                            lambda: agent.estimates.lambda[pos][t],
                            sent: sent_by[i],
                        });
                    }
                }
                for t in 0..horizon {
                    doe_trace.push(DoeTraceRow {
                        iter: k,
                        i: agent.node(),
                        t,
                        ask: asks[i][t],
                        allocation: grant[i][t],
                        psi: psi[i][t],
                    });
                }
            }
        }
        trace.push(IterationRecord {
            iteration: k,
            r_es,
            r_et,
            r_ds,
            r_dt,
            messages_sent: sent,
            messages_censored: censored,
            threshold,
            exactness_gap: gap_k,
            reduced_accuracy: reports.iter().zip(&nodes).filter(|(r, _)| r.reduced_accuracy).map(|(_, &n)| n).collect(),
        });

        prev_trades = decisions.iter().map(|d| d.trades.clone()).collect();
        prev_grant = grant;
        last = Some((decisions, reports));
        if check_convergence(&trace, &market.thresholds) {
            converged = true;
            break;
        }
    }

    let (decisions, reports) = last.expect("at least one iteration");
    let asks: Vec<Vec<f64>> = decisions.iter().map(|d| d.ask.clone()).collect();
    let estimates: Vec<LocalEstimates> = agents.iter().map(|a| a.estimates.clone()).collect();
    let envelope = EnvelopeState {
        asks,
        allocation: prev_grant,
        psi: estimates.iter().map(|e| e.psi.clone()).collect(),
        import_limit: case.prosumers.iter().map(|p| p.import_limit.clone()).collect(),
    };

    let node_idx = prosumer_node_indices(case)?;
    let injections: Vec<Vec<f64>> = decisions.iter().map(|d| d.p_inj.clone()).collect();
    let flows = sweep_powerflow(&case.network, &NodalInjections::with_prosumers(&case.network, &node_idx, &injections))?;
    let (breakdown, network_cost, final_gap) = match (&dso.last, options.doe_enabled) {
        (Some(outcome), true) => (dso.breakdown()?, outcome.loss_cost, outcome.exactness_gap),
        _ => (None, loss_cost(&flows, &market.pi, dt), check_exactness(&flows)),
    };
    let integrity = integrity_report(case, &flows, &injections, final_gap, max_gap);
    let surpluses: Vec<f64> = reports.iter().map(|r| r.surplus).collect();
    let grid_cost: f64 = decisions.iter().map(|d| d.grid_cost(market, dt)).sum();
    let objective = network_cost + grid_cost;

    Ok(ClearingResult {
        mode: options.mode,
        doe_enabled: options.doe_enabled,
        converged,
        iterations: trace.len(),
        prosumers: nodes,
        decisions,
        reports,
        estimates,
        envelope,
        breakdown,
        trace,
        agent_trace,
        doe_trace,
        deliveries: bus.log().to_vec(),
        flows,
        integrity,
        surpluses,
        network_cost,
        objective,
    })
}

fn integrity_report(
    case: &Case,
    flows: &PowerFlowSolution,
    injections: &[Vec<f64>],
    final_exactness_gap: f64,
    max_exactness_gap: f64,
) -> IntegrityReport {
    let net = &case.network;
    let dt = net.delta_t;
    let losses = flows.losses();
    let mut conservation: f64 = 0.0;
    for t in 0..case.horizon() {
        let withdrawals: f64 = (0..net.num_nodes()).map(|k| net.p_load(k, t)).sum();
        let injected: f64 = injections.iter().map(|p| p[t]).sum();
        let expected = withdrawals - injected + losses[t];
        conservation = conservation.max((flows.periods[t].p0 - expected).abs());
    }
    IntegrityReport {
        voltage_violations: flows.voltage_violations(net, INTEGRITY_TOL).len(),
        line_overloads: flows.line_overloads(net, INTEGRITY_TOL).len(),
        max_voltage_violation: flows.max_voltage_violation(net),
        loss_energy: losses.iter().map(|l| l * dt).sum(),
        conservation_residual: conservation,
        final_exactness_gap,
        max_exactness_gap,
    }
}

/// Outcome of sampling injections inside the envelopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub samples: usize,
    /// Samples with at least one voltage or rating violation.
    pub violating_samples: usize,
    pub worst_voltage_violation: f64,
}

/// Draws `samples` injection profiles uniformly between `−P^imp` and the
/// envelope and verifies each on the exact power flow.
pub fn sample_dominated_points(
    case: &Case,
    envelope: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<RobustnessReport, ClearingError> {
    let node_idx = prosumer_node_indices(case)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violating = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let injections: Vec<Vec<f64>> = case
            .prosumers
            .iter()
            .zip(envelope)
            .map(|(p, env)| {
                env.iter()
                    .zip(&p.import_limit)
                    .map(|(&hi, &imp)| {
                        let lo = -imp;
                        if hi > lo { lo + rng.gen::<f64>() * (hi - lo) } else { hi }
                    })
                    .collect()
            })
            .collect();
        let flows = sweep_powerflow(&case.network, &NodalInjections::with_prosumers(&case.network, &node_idx, &injections))?;
        let bad = !flows.voltage_violations(&case.network, INTEGRITY_TOL).is_empty()
            || !flows.line_overloads(&case.network, INTEGRITY_TOL).is_empty();
        violating += bad as usize;
        worst = worst.max(flows.max_voltage_violation(&case.network));
    }
    Ok(RobustnessReport { samples, violating_samples: violating, worst_voltage_violation: worst })
}

/// Solution of the monolithic clearing problem.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub objective: f64,
    pub network_cost: f64,
    pub asks: Vec<Vec<f64>>,
    pub decisions: Vec<LocalDecision>,
    pub exactness_gap: f64,
}

/// Solves all prosumer problems and the envelope OPF as one program, with
/// reciprocity imposed directly and the network injecting `(s/S)·P^e`.
pub fn solve_centralized_oracle(case: &Case) -> Result<OracleSolution, ClearingError> {
    let market = &case.market;
    let net = &case.network;
    let horizon = case.horizon();
    let scenarios = market.scenarios.max(1);
    let node_idx = prosumer_node_indices(case)?;
    let mut program = ConicProgram::new();
    let blocks: Vec<_> = case
        .prosumers
        .iter()
        .map(|p| add_prosumer_block(&mut program, p, market, net.delta_t))
        .collect();

    for (i, pos_list) in pair_index(case).iter().enumerate() {
        for (pos, &(jj, back)) in pos_list.iter().enumerate() {
            if jj > i {
                for t in 0..horizon {
                    program.add_eq(&Affine::var(blocks[i].trades[pos][t]).term(blocks[jj].trades[back][t], 1.0));
                }
            }
        }
    }

    let mut network = Vec::with_capacity(scenarios);
    for s in 1..=scenarios {
        let share = s as f64 / scenarios as f64;
        let mut per_t = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut extra = vec![None; net.num_nodes()];
            for (i, &k) in node_idx.iter().enumerate() {
                extra[k] = Some(Affine::constant(0.0).term(blocks[i].ask[t], share));
            }
            let block = add_network_block(&mut program, net, t, &extra);
            add_loss_cost(&mut program, net, &block, market.pi[t], scenarios);
            per_t.push(block);
        }
        network.push(per_t);
    }

    let sol = solve_conic(&program, market.solver_tol)?;
    let decisions: Vec<LocalDecision> = blocks.iter().map(|b| b.extract(&sol.x)).collect();
    let mut network_cost = 0.0;
    let mut gap: f64 = 0.0;
    for per_t in &network {
        let periods = per_t.iter().map(|b| b.extract(net, &sol.x)).collect();
        let flows = PowerFlowSolution {
            periods,
            upstream: (0..net.num_lines()).map(|j| net.line_up(j)).collect(),
            resistance: net.lines.iter().map(|l| l.r).collect(),
            reactance: net.lines.iter().map(|l| l.x).collect(),
        };
        network_cost += loss_cost(&flows, &market.pi, net.delta_t) / scenarios as f64;
        gap = gap.max(check_exactness(&flows));
    }
    Ok(OracleSolution {
        objective: sol.objective,
        network_cost,
        asks: decisions.iter().map(|d| d.ask.clone()).collect(),
        decisions,
        exactness_gap: gap,
    })
}
