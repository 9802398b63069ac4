//! DSO agent: envelope allocation, DOE price updates and the decomposition of
//! the DOE price into network components.
//!
//! The agent is built from the network and the prosumers' node ids only; it
//! never sees trades, batteries or forecasts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::SolverError;
use crate::distflow::{
    build_socp_opf, loss_cost, sweep_period, sweep_powerflow, NodalInjections, NetworkDuals, OpfInputs,
    OpfSolution, PeriodFlow, PowerFlowError, PowerFlowSolution,
};
use crate::netmodel::{CaseError, NetworkCase, NodeId};

/// Step of the central differences used for network sensitivities, pu.
pub const SENSITIVITY_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsoError {
    #[error("envelope OPF failed: {0}")]
    Solver(#[from] SolverError),
    #[error("network sensitivity evaluation failed: {0}")]
    Sensitivity(PowerFlowError),
    #[error("power flow failed: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("asks must be finite")]
    NonFiniteAsk,
}

/// Negotiated envelope quantities, all indexed `[prosumer][t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeState {
    pub asks: Vec<Vec<f64>>,
    pub allocation: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub import_limit: Vec<Vec<f64>>,
}

impl EnvelopeState {
    /// Σ (P^{dso,e} − P^e)².
    pub fn gap(&self) -> f64 {
        squared_distance(&self.allocation, &self.asks)
    }
}

pub(crate) fn squared_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(x, y)| (x - y) * (x - y)))
        .sum()
}

/// DOE price components of one prosumer and period, money per pu·h.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceComponents {
    pub congestion_send: f64,
    pub congestion_recv: f64,
    pub voltage: f64,
    pub energy: f64,
    pub loss: f64,
    /// |Σ components + Ψ|.
    pub residual: f64,
}

impl PriceComponents {
    pub fn total(&self) -> f64 {
        self.congestion_send + self.congestion_recv + self.voltage + self.energy + self.loss
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("congestion_send", self.congestion_send),
            ("congestion_recv", self.congestion_recv),
            ("voltage", self.voltage),
            ("energy", self.energy),
            ("loss", self.loss),
            ("residual", self.residual),
        ]
    }
}

/// Components for every prosumer and period, `[prosumer][t]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceBreakdown {
    pub components: Vec<Vec<PriceComponents>>,
}

impl PriceBreakdown {
    pub fn max_residual(&self) -> f64 {
        self.components.iter().flatten().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Outcome of one DSO solve.
#[derive(Clone, Debug)]
pub struct DsoOutcome {
    pub allocation: Vec<Vec<f64>>,
    pub duals: NetworkDuals,
    /// Relaxed branch-flow solution per scenario.
    pub flows: Vec<PowerFlowSolution>,
    /// Value of the DSO subproblem objective.
    pub objective: f64,
    /// Scenario-averaged loss cost `J(P^{dso,e})`.
    pub loss_cost: f64,
    /// Worst relative cone gap.
    pub exactness_gap: f64,
}

impl From<OpfSolution> for DsoOutcome {
    fn from(sol: OpfSolution) -> Self {
        let exactness_gap = sol.exactness_gap();
        DsoOutcome {
            allocation: sol.allocation,
            duals: sol.duals,
            flows: sol.flows,
            objective: sol.objective,
            loss_cost: sol.loss_cost,
            exactness_gap,
        }
    }
}

/// Network-side data the DSO needs to solve its subproblem.
#[derive(Clone, Debug)]
pub struct DsoParams {
    pub pi: Vec<f64>,
    pub rho: f64,
    pub scenarios: usize,
    pub solver_tol: f64,
}

/// Solves the envelope OPF for the given asks and DOE prices.
pub fn solve_dso(
    case: &NetworkCase,
    prosumer_nodes: &[usize],
    asks: &[Vec<f64>],
    psi: &[Vec<f64>],
    params: &DsoParams,
) -> Result<DsoOutcome, DsoError> {
    if asks.iter().flatten().any(|a| !a.is_finite()) {
        return Err(DsoError::NonFiniteAsk);
    }
    let program = build_socp_opf(
        case,
        &OpfInputs {
            prosumer_nodes,
            asks,
            psi,
            rho: params.rho,
            scenarios: params.scenarios,
            pi: &params.pi,
        },
    );
    Ok(program.solve(case, &params.pi, params.solver_tol)?.into())
}

/// `Ψ^k = Ψ^{k−1} + ρ (P^{dso,e} − P^e)`, elementwise.
pub fn update_doe_price(psi: &[Vec<f64>], allocation: &[Vec<f64>], asks: &[Vec<f64>], rho: f64) -> Vec<Vec<f64>> {
    psi.iter()
        .zip(allocation.iter().zip(asks))
        .map(|(p, (d, e))| p.iter().zip(d.iter().zip(e)).map(|(p, (d, e))| p + rho * (d - e)).collect())
        .collect()
}

/// Scenario-averaged loss cost of an allocation, evaluated on the exact power flow.
pub fn dso_cost(
    case: &NetworkCase,
    prosumer_nodes: &[usize],
    allocation: &[Vec<f64>],
    scenarios: usize,
    pi: &[f64],
) -> Result<f64, PowerFlowError> {
    let mut total = 0.0;
    for s in 1..=scenarios {
        let share = s as f64 / scenarios as f64;
        let scaled: Vec<Vec<f64>> = allocation.iter().map(|a| a.iter().map(|x| share * x).collect()).collect();
        let sol = sweep_powerflow(case, &NodalInjections::with_prosumers(case, prosumer_nodes, &scaled))?;
        total += loss_cost(&sol, pi, case.delta_t);
    }
    Ok(total / scenarios as f64)
}

struct Sensitivity {
    dp: Vec<f64>,
    dq: Vec<f64>,
    dl: Vec<f64>,
    dw: Vec<f64>,
}

fn central_difference(
    case: &NetworkCase,
    t: usize,
    p_inj: &[f64],
    q_inj: &[f64],
    node: usize,
) -> Result<Sensitivity, PowerFlowError> {
    let h = SENSITIVITY_STEP;
    let mut up = p_inj.to_vec();
    up[node] += h;
    let mut down = p_inj.to_vec();
    down[node] -= h;
    let a = sweep_period(case, t, &up, q_inj)?;
    let b = sweep_period(case, t, &down, q_inj)?;
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| (x - y) / (2.0 * h)).collect();
    Ok(Sensitivity { dp: diff(&a.p, &b.p), dq: diff(&a.q, &b.q), dl: diff(&a.l, &b.l), dw: diff(&a.w, &b.w) })
}

/// Splits −Ψ into congestion, voltage, energy and loss components using the
/// DSO's network multipliers and finite-difference sensitivities of the exact
/// power flow at each scenario's operating point.
pub fn decompose_price(
    case: &NetworkCase,
    prosumer_nodes: &[usize],
    allocation: &[Vec<f64>],
    duals: &NetworkDuals,
    psi: &[Vec<f64>],
    pi: &[f64],
    scenarios: usize,
) -> Result<PriceBreakdown, DsoError> {
    let horizon = case.horizon();
    let base = NodalInjections::fixed_loads(case);
    let mut components = vec![vec![PriceComponents::default(); horizon]; prosumer_nodes.len()];
    let s_count = scenarios as f64;
    for s in 1..=scenarios {
        let share = s as f64 / s_count;
        let si = s - 1;
        for t in 0..horizon {
            let mut p_inj = base.p[t].clone();
            for (i, &k) in prosumer_nodes.iter().enumerate() {
                p_inj[k] += share * allocation[i][t];
            }
            let q_inj = &base.q[t];
            let op: PeriodFlow = sweep_period(case, t, &p_inj, q_inj).map_err(DsoError::Sensitivity)?;
            for (i, &k) in prosumer_nodes.iter().enumerate() {
                let d = central_difference(case, t, &p_inj, q_inj, k).map_err(DsoError::Sensitivity)?;
                let c = &mut components[i][t];
                let mut send = 0.0;
                let mut recv = 0.0;
                let mut r_dl = 0.0;
                let mut x_dl = 0.0;
                for (j, line) in case.lines.iter().enumerate() {
                    let (fp, fq, l) = (op.p[j], op.q[j], op.l[j]);
                    send += duals.eta[si][t][j] * 2.0 * (fp * d.dp[j] + fq * d.dq[j]);
                    recv += duals.delta[si][t][j]
                        * 2.0
                        * ((fp - line.r * l) * (d.dp[j] - line.r * d.dl[j])
                            + (fq - line.x * l) * (d.dq[j] - line.x * d.dl[j]));
                    r_dl += line.r * d.dl[j];
                    x_dl += line.x * d.dl[j];
                }
                let voltage: f64 = (0..case.num_nodes())
                    .map(|n| (duals.tau_plus[si][t][n] - duals.tau_minus[si][t][n]) * d.dw[n])
                    .sum();
                let omega_p = duals.omega_p[si][t];
                let omega_q = duals.omega_q[si][t];
                c.congestion_send += share * send;
                c.congestion_recv += share * recv;
                c.voltage += share * voltage;
                c.energy += share * omega_p;
                c.loss += share * ((omega_p + pi[t] / s_count) * r_dl + omega_q * x_dl);
            }
        }
    }
    for (i, row) in components.iter_mut().enumerate() {
        for (t, c) in row.iter_mut().enumerate() {
            c.residual = (c.total() + psi[i][t]).abs();
        }
    }
    Ok(PriceBreakdown { components })
}

/// The DSO agent of the negotiation loop.
#[derive(Clone, Debug)]
pub struct DsoAgent {
    network: NetworkCase,
    prosumer_nodes: Vec<usize>,
    params: DsoParams,
    pub psi: Vec<Vec<f64>>,
    pub allocation: Vec<Vec<f64>>,
    pub last: Option<DsoOutcome>,
}

impl DsoAgent {
    /// `prosumers` are node ids; the agent keeps only their network positions.
    pub fn new(network: NetworkCase, prosumers: &[NodeId], params: DsoParams) -> Result<Self, CaseError> {
        let prosumer_nodes = prosumers.iter().map(|&id| network.index_of(id)).collect::<Result<Vec<_>, _>>()?;
        let horizon = network.horizon();
        Ok(DsoAgent {
            psi: vec![vec![0.0; horizon]; prosumer_nodes.len()],
            allocation: vec![vec![0.0; horizon]; prosumer_nodes.len()],
            network,
            prosumer_nodes,
            params,
            last: None,
        })
    }

    pub fn network(&self) -> &NetworkCase {
        &self.network
    }

    pub fn prosumer_nodes(&self) -> &[usize] {
        &self.prosumer_nodes
    }

    pub fn params(&self) -> &DsoParams {
        &self.params
    }

    /// Solves the envelope OPF against `asks` and advances Ψ.
    pub fn step(&mut self, asks: &[Vec<f64>]) -> Result<&DsoOutcome, DsoError> {
        let outcome = solve_dso(&self.network, &self.prosumer_nodes, asks, &self.psi, &self.params)?;
        self.psi = update_doe_price(&self.psi, &outcome.allocation, asks, self.params.rho);
        self.allocation = outcome.allocation.clone();
        Ok(self.last.insert(outcome))
    }

    pub fn breakdown(&self) -> Result<Option<PriceBreakdown>, DsoError> {
        let Some(last) = &self.last else { return Ok(None) };
        decompose_price(
            &self.network,
            &self.prosumer_nodes,
            &last.allocation,
            &last.duals,
            &self.psi,
            &self.params.pi,
            self.params.scenarios,
        )
        .map(Some)
    }
}
