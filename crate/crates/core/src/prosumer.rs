//! Prosumer agent: local P2P2G decision problem, consensus estimates and the
//! communication-censoring rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{solve_conic, Affine, ConicProgram, RowId, SolverError, VarId};
use crate::netmodel::{MarketParams, NodeId, ProsumerSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProsumerError {
    #[error("local problem of prosumer {node} is infeasible")]
    Infeasible { node: NodeId },
    #[error("local solve of prosumer {node} failed: {source}")]
    Solver {
        node: NodeId,
        #[source]
        source: SolverError,
    },
}

/// Decision of one prosumer over the horizon. Trades are indexed
/// `[partner position][t]` following `ProsumerSpec::partners`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDecision {
    pub p_buy: Vec<f64>,
    pub p_sell: Vec<f64>,
    pub p_batt: Vec<f64>,
    pub soc: Vec<f64>,
    pub p_p2p: Vec<f64>,
    pub ask: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub trades: Vec<Vec<f64>>,
}

impl LocalDecision {
    /// Trades flattened partner-major, the vector compared by the censoring rule.
    pub fn flat_trades(&self) -> Vec<f64> {
        self.trades.iter().flatten().copied().collect()
    }

    /// Grid purchase cost minus grid sales revenue, Σ ΔT (λ⁺p⁺ − λ⁻p⁻).
    pub fn grid_cost(&self, market: &MarketParams, delta_t: f64) -> f64 {
        (0..self.p_buy.len())
            .map(|t| delta_t * (market.tou[t] * self.p_buy[t] - market.fit[t] * self.p_sell[t]))
            .sum()
    }
}

/// Local copies of the coupled quantities held by one prosumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimates {
    /// Consensus trade estimates ê_{ij,t}.
    pub e_hat: Vec<Vec<f64>>,
    /// P2P price estimates λ_{ij,t}.
    pub lambda: Vec<Vec<f64>>,
    /// DOE price received from the DSO.
    pub psi: Vec<f64>,
    /// DSO-side envelope received from the DSO.
    pub allocation: Vec<f64>,
}

impl LocalEstimates {
    /// Starting point: zero trades, P2P price halfway between the tariffs,
    /// neutral DOE price and an envelope at the peak RES output.
    pub fn initial(spec: &ProsumerSpec, market: &MarketParams) -> Self {
        let horizon = market.horizon();
        let mid: Vec<f64> = (0..horizon).map(|t| 0.5 * (market.fit[t] + market.tou[t])).collect();
        let peak = spec.res.iter().copied().fold(0.0, f64::max);
        LocalEstimates {
            e_hat: vec![vec![0.0; horizon]; spec.partners.len()],
            lambda: vec![mid; spec.partners.len()],
            psi: vec![0.0; horizon],
            allocation: vec![peak; horizon],
        }
    }
}

/// Multipliers of the local problem, in money per pu·h.
///
/// Equalities are written `p⁺ − p⁻ − p^batt − p^P2P − (p^d − p^res) = 0` (φ),
/// `p^P2P − Σ_j e_ij = 0` (μ), `p^inj − p⁻ + p⁺ − p^P2P = 0` (ε), and the
/// envelope `p^inj − P^e ≤ 0` (γ ≥ 0), each entering the Lagrangian as
/// `multiplier × left-hand side`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Multiplier of the import bound `−p^inj ≤ P^imp`.
    pub import: Vec<f64>,
    pub surplus: f64,
    /// The solver stopped at its relaxed accuracy level.
    pub reduced_accuracy: bool,
}

/// Variables and rows of one prosumer inside a larger program.
#[derive(Clone, Debug)]
pub struct ProsumerBlock {
    pub p_buy: Vec<VarId>,
    pub p_sell: Vec<VarId>,
    pub p_batt: Vec<VarId>,
    pub soc: Vec<VarId>,
    pub p_p2p: Vec<VarId>,
    pub ask: Vec<VarId>,
    pub p_inj: Vec<VarId>,
    pub trades: Vec<Vec<VarId>>,
    pub balance_rows: Vec<RowId>,
    pub p2p_rows: Vec<RowId>,
    pub inj_rows: Vec<RowId>,
    pub doe_rows: Vec<RowId>,
    pub import_rows: Vec<RowId>,
}

fn add_box(program: &mut ConicProgram, v: VarId, lo: f64, hi: f64) {
    if lo == hi {
        program.add_eq(&Affine::var(v).plus(-lo));
    } else {
        program.add_le(&Affine::constant(lo).term(v, -1.0));
        program.add_le(&Affine::var(v).plus(-hi));
    }
}

/// Adds the prosumer's constraints and its grid cost `Σ ΔT(λ⁺p⁺ − λ⁻p⁻)`.
pub fn add_prosumer_block(
    program: &mut ConicProgram,
    spec: &ProsumerSpec,
    market: &MarketParams,
    delta_t: f64,
) -> ProsumerBlock {
    let horizon = market.horizon();
    let p_buy = program.add_vars(horizon);
    let p_sell = program.add_vars(horizon);
    let p_batt = program.add_vars(horizon);
    let soc = program.add_vars(horizon);
    let p_p2p = program.add_vars(horizon);
    let ask = program.add_vars(horizon);
    let p_inj = program.add_vars(horizon);
    let trades: Vec<Vec<VarId>> = spec.partners.iter().map(|_| program.add_vars(horizon)).collect();
    let batt = &spec.battery;

    let mut balance_rows = Vec::with_capacity(horizon);
    let mut p2p_rows = Vec::with_capacity(horizon);
    let mut inj_rows = Vec::with_capacity(horizon);
    let mut doe_rows = Vec::with_capacity(horizon);
    let mut import_rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        program.add_linear_cost(p_buy[t], delta_t * market.tou[t]);
        program.add_linear_cost(p_sell[t], -delta_t * market.fit[t]);

        add_box(program, p_buy[t], 0.0, spec.p2g.buy_max);
        add_box(program, p_sell[t], 0.0, spec.p2g.sell_max);
        add_box(program, p_batt[t], batt.p_min, batt.p_max);
        add_box(program, soc[t], batt.e_min, batt.e_max);

        // E_t = E_{t-1} + p^batt_t ΔT
        let mut dynamics = Affine::var(soc[t]).term(p_batt[t], -delta_t);
        if t == 0 {
            dynamics.constant -= batt.e0;
        } else {
            dynamics = dynamics.term(soc[t - 1], -1.0);
        }
        program.add_eq(&dynamics);

        balance_rows.push(program.add_eq(
            &Affine::var(p_buy[t])
                .term(p_sell[t], -1.0)
                .term(p_batt[t], -1.0)
                .term(p_p2p[t], -1.0)
                .plus(spec.res[t] - spec.demand[t]),
        ));
        let mut p2p = Affine::var(p_p2p[t]);
        for partner in &trades {
            p2p = p2p.term(partner[t], -1.0);
        }
        p2p_rows.push(program.add_eq(&p2p));
        inj_rows.push(program.add_eq(
            &Affine::var(p_inj[t]).term(p_sell[t], -1.0).term(p_buy[t], 1.0).term(p_p2p[t], -1.0),
        ));
        doe_rows.push(program.add_le(&Affine::var(p_inj[t]).term(ask[t], -1.0)));
        import_rows.push(program.add_le(&Affine::constant(-spec.import_limit[t]).term(p_inj[t], -1.0)));
    }
    if market.terminal_soc && horizon > 0 {
        program.add_le(&Affine::constant(batt.e0).term(soc[horizon - 1], -1.0));
    }

    ProsumerBlock {
        p_buy,
        p_sell,
        p_batt,
        soc,
        p_p2p,
        ask,
        p_inj,
        trades,
        balance_rows,
        p2p_rows,
        inj_rows,
        doe_rows,
        import_rows,
    }
}

impl ProsumerBlock {
    pub fn extract(&self, x: &[f64]) -> LocalDecision {
        let read = |vars: &[VarId]| vars.iter().map(|&v| x[v]).collect::<Vec<_>>();
        LocalDecision {
            p_buy: read(&self.p_buy),
            p_sell: read(&self.p_sell),
            p_batt: read(&self.p_batt),
            soc: read(&self.soc),
            p_p2p: read(&self.p_p2p),
            ask: read(&self.ask),
            p_inj: read(&self.p_inj),
            trades: self.trades.iter().map(|v| read(v)).collect(),
        }
    }
}

/// Solves the local subproblem against the current estimates.
pub fn solve_local(
    spec: &ProsumerSpec,
    est: &LocalEstimates,
    market: &MarketParams,
    delta_t: f64,
) -> Result<(LocalDecision, PriceReport), ProsumerError> {
    let horizon = market.horizon();
    let mut program = ConicProgram::new();
    let block = add_prosumer_block(&mut program, spec, market, delta_t);
    let rho = market.rho;
    for t in 0..horizon {
        for (pos, vars) in block.trades.iter().enumerate() {
            // λ(ê − e) + ρ/2 (ê − e)²
            let lambda = est.lambda[pos][t];
            let e_hat = est.e_hat[pos][t];
            program.add_linear_cost(vars[t], -delta_t * lambda);
            program.add_constant_cost(delta_t * lambda * e_hat);
            program.add_square_cost(&Affine::constant(e_hat).term(vars[t], -1.0), delta_t * rho);
        }
        // Ψ(P^{dso,e} − P^e) + ρ/2 (P^{dso,e} − P^e)²
        let psi = est.psi[t];
        let alloc = est.allocation[t];
        program.add_linear_cost(block.ask[t], -delta_t * psi);
        program.add_constant_cost(delta_t * psi * alloc);
        program.add_square_cost(&Affine::constant(alloc).term(block.ask[t], -1.0), delta_t * rho);
    }

    let sol = solve_conic(&program, market.solver_tol).map_err(|source| match source {
        SolverError::Infeasible => ProsumerError::Infeasible { node: spec.node },
        source => ProsumerError::Solver { node: spec.node, source },
    })?;
    let decision = block.extract(&sol.x);
    let dual = |rows: &[RowId]| rows.iter().map(|&r| sol.z[r] / delta_t).collect::<Vec<_>>();
    let report = PriceReport {
        phi: dual(&block.balance_rows),
        gamma: dual(&block.doe_rows),
        mu: dual(&block.p2p_rows),
        epsilon: dual(&block.inj_rows),
        import: dual(&block.import_rows),
        surplus: surplus(&decision, &est.lambda, market, delta_t),
        reduced_accuracy: sol.reduced_accuracy,
    };
    Ok((decision, report))
}

/// Whether a prosumer transmits its new trades: true iff
/// `‖ê^{k−1} − e^k‖₂ − α·m^k ≥ 0`.
pub fn censor(prev_estimate: &[f64], new_trades: &[f64], alpha: f64, threshold: f64) -> bool {
    debug_assert_eq!(prev_estimate.len(), new_trades.len());
    let change = prev_estimate
        .iter()
        .zip(new_trades)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    change - alpha * threshold >= 0.0
}

/// Consensus and price update for one prosumer:
/// `ê = ½(e_ij − e_ji)`, then `λ ← λ + ρ(ê − e_ij)`.
///
/// `partner_trades[pos]` is the last value received from that partner, which
/// is stale when the partner was censored this round.
pub fn update_estimates(
    est: &LocalEstimates,
    own_trades: &[Vec<f64>],
    partner_trades: &[Vec<f64>],
    rho: f64,
) -> LocalEstimates {
    let mut next = est.clone();
    for pos in 0..own_trades.len() {
        for t in 0..own_trades[pos].len() {
            let e_ij = own_trades[pos][t];
            let e_hat = 0.5 * (e_ij - partner_trades[pos][t]);
            next.e_hat[pos][t] = e_hat;
            next.lambda[pos][t] = est.lambda[pos][t] + rho * (e_hat - e_ij);
        }
    }
    next
}

/// Prosumer surplus `−θ_i = Σ_t ΔT (λ⁻p⁻ − λ⁺p⁺ + Σ_j λ_ij e_ij)`.
pub fn surplus(decision: &LocalDecision, lambda: &[Vec<f64>], market: &MarketParams, delta_t: f64) -> f64 {
    let p2p: f64 = decision
        .trades
        .iter()
        .zip(lambda)
        .flat_map(|(e, l)| e.iter().zip(l).map(|(e, l)| e * l))
        .sum();
    -decision.grid_cost(market, delta_t) + delta_t * p2p
}

/// A prosumer agent: its private data and everything it has heard.
#[derive(Clone, Debug)]
pub struct ProsumerAgent {
    spec: ProsumerSpec,
    pub estimates: LocalEstimates,
    /// Last trades received from every partner, `[partner position][t]`.
    pub received: Vec<Vec<f64>>,
}

impl ProsumerAgent {
    pub fn new(spec: ProsumerSpec, market: &MarketParams) -> Self {
        let estimates = LocalEstimates::initial(&spec, market);
        let received = vec![vec![0.0; market.horizon()]; spec.partners.len()];
        ProsumerAgent { spec, estimates, received }
    }

    pub fn node(&self) -> NodeId {
        self.spec.node
    }

    pub fn partners(&self) -> &[NodeId] {
        &self.spec.partners
    }

    pub fn spec(&self) -> &ProsumerSpec {
        &self.spec
    }

    pub fn solve(&self, market: &MarketParams, delta_t: f64) -> Result<(LocalDecision, PriceReport), ProsumerError> {
        solve_local(&self.spec, &self.estimates, market, delta_t)
    }

    pub fn should_send(&self, decision: &LocalDecision, alpha: f64, threshold: f64) -> bool {
        let prev: Vec<f64> = self.estimates.e_hat.iter().flatten().copied().collect();
        censor(&prev, &decision.flat_trades(), alpha, threshold)
    }

    /// Stores a trade offer `e_{ji}` from partner `from`.
    pub fn receive_offer(&mut self, from: NodeId, amounts: &[f64]) {
        if let Some(pos) = self.spec.partners.iter().position(|&j| j == from) {
            self.received[pos].copy_from_slice(amounts);
        }
    }

    pub fn receive_grant(&mut self, allocation: &[f64], psi: &[f64]) {
        self.estimates.allocation.copy_from_slice(allocation);
        self.estimates.psi.copy_from_slice(psi);
    }

    pub fn update(&mut self, decision: &LocalDecision, rho: f64) {
        self.estimates = update_estimates(&self.estimates, &decision.trades, &self.received, rho);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Battery, P2gLimits, Thresholds};

    fn market(horizon: usize) -> MarketParams {
        MarketParams {
            fit: vec![0.1; horizon],
            tou: vec![0.2; horizon],
            pi: vec![0.15; horizon],
            rho: 1.0,
            alpha: 0.0,
            m0: 1.0,
            tau_m: 0.9,
            scenarios: 1,
            thresholds: Thresholds::uniform(1.5e-5),
            max_iters: 100,
            solver_tol: 1e-9,
            terminal_soc: true,
            dso_steps: 1,
        }
    }

    fn spec(demand: f64, res: f64, partners: Vec<NodeId>) -> ProsumerSpec {
        ProsumerSpec {
            node: 1,
            battery: Battery::none(),
            demand: vec![demand; 2],
            res: vec![res; 2],
            p2g: P2gLimits { buy_max: 2.0, sell_max: 2.0 },
            partners,
            import_limit: vec![2.0; 2],
        }
    }

    #[test]
    fn isolated_prosumer_buys_its_demand() {
        let m = market(2);
        let s = spec(0.4, 0.0, vec![]);
        let mut est = LocalEstimates::initial(&s, &m);
        est.allocation = vec![1.0; 2];
        let (d, report) = solve_local(&s, &est, &m, 1.0).unwrap();
        for t in 0..2 {
            assert!((d.p_buy[t] - 0.4).abs() < 1e-6);
            assert!(d.p_sell[t].abs() < 1e-6);
            assert!(d.p_buy[t] * d.p_sell[t] <= 1e-8);
            // buying at the margin: the balance multiplier is minus the tariff
            assert!((report.phi[t] + 0.2).abs() < 1e-6, "{}", report.phi[t]);
        }
        assert!(d.trades.is_empty());
        // two periods at 0.2 × 0.4
        assert!((report.surplus + 0.16).abs() < 1e-6, "{}", report.surplus);
    }

    #[test]
    fn first_iteration_moves_toward_the_partner() {
        let m = market(2);
        let seller = ProsumerSpec { node: 1, ..spec(0.0, 0.5, vec![2]) };
        let buyer = ProsumerSpec { node: 2, ..spec(0.5, 0.0, vec![1]) };
        let (ds, _) = solve_local(&seller, &LocalEstimates::initial(&seller, &m), &m, 1.0).unwrap();
        let (db, _) = solve_local(&buyer, &LocalEstimates::initial(&buyer, &m), &m, 1.0).unwrap();
        for t in 0..2 {
            assert!(ds.trades[0][t] > 1e-3, "seller offers a positive amount");
            assert!(db.trades[0][t] < -1e-3, "buyer asks for energy");
        }
    }

    #[test]
    fn initial_price_is_the_tariff_midpoint() {
        let m = market(2);
        let est = LocalEstimates::initial(&spec(0.0, 0.3, vec![2]), &m);
        assert!(est.lambda[0].iter().all(|l| (l - 0.15).abs() < 1e-15));
        assert_eq!(est.allocation, vec![0.3, 0.3]);
        assert_eq!(est.psi, vec![0.0, 0.0]);
    }

    #[test]
    fn censoring_rule() {
        assert!(!censor(&[0.1, 0.2], &[0.1, 0.2], 1.0, 0.3));
        assert!(censor(&[0.1, 0.2], &[0.1, 0.2], 0.0, 0.3));
        // ‖ξ‖ = 0.5
        assert!(censor(&[0.3, 0.4], &[0.0, 0.0], 1.0, 0.4));
        assert!(!censor(&[0.3, 0.4], &[0.0, 0.0], 1.0, 0.6));
    }

    #[test]
    fn estimate_update_arithmetic() {
        let est = LocalEstimates {
            e_hat: vec![vec![0.0]],
            lambda: vec![vec![0.15]],
            psi: vec![0.0],
            allocation: vec![1.0],
        };
        let agreed = update_estimates(&est, &[vec![0.2]], &[vec![-0.2]], 2.0);
        assert!((agreed.e_hat[0][0] - 0.2).abs() < 1e-15);
        assert_eq!(agreed.lambda[0][0], 0.15);
        let off = update_estimates(&est, &[vec![0.3]], &[vec![-0.1]], 2.0);
        assert!((off.e_hat[0][0] - 0.2).abs() < 1e-15);
        assert!((off.lambda[0][0] - (0.15 + 2.0 * -0.1)).abs() < 1e-15);
    }

    #[test]
    fn surplus_terms() {
        let m = market(1);
        let zero = LocalDecision {
            p_buy: vec![0.0],
            p_sell: vec![0.0],
            p_batt: vec![0.0],
            soc: vec![0.0],
            p_p2p: vec![0.0],
            ask: vec![0.0],
            p_inj: vec![0.0],
            trades: vec![],
        };
        assert_eq!(surplus(&zero, &[], &m, 1.0), 0.0);
        let sell = LocalDecision { p_sell: vec![1.0], ..zero };
        assert!((surplus(&sell, &[], &m, 1.0) - 0.1).abs() < 1e-15);
    }
}
